//! Design-time and post-hoc stability analysis: Hurwitz design, decay rate,
//! jump factor, dwell time, the K-matrix conditions and the composite
//! Lyapunov function.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{self, GraphLyapunov, Topology};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct HurwitzDesign {
    pub poles: Vec<f64>,
    /// `λ₁ … λ_{n−1}` (λ₁ is the constant coefficient).
    pub lambda_bar: DVector<f64>,
    pub companion: DMatrix<f64>,
    pub p1: DMatrix<f64>,
    pub beta: f64,
}

/// Companion matrix with ones on the superdiagonal and last row `−λ̄ᵀ`.
pub fn companion(lambda_bar: &DVector<f64>) -> DMatrix<f64> {
    let m = lambda_bar.len();
    let mut c = DMatrix::zeros(m, m);
    for k in 0..m.saturating_sub(1) {
        c[(k, k + 1)] = 1.0;
    }
    for k in 0..m {
        c[(m - 1, k)] = -lambda_bar[k];
    }
    c
}

/// Expands `Π(s + ξⱼ)` and returns the coefficients below the leading one,
/// constant term first.
pub fn poly_from_poles(poles: &[f64]) -> Vec<f64> {
    // coeffs[k] multiplies s^k; start with the constant polynomial 1.
    let mut coeffs = vec![1.0];
    for &xi in poles {
        let mut next = vec![0.0; coeffs.len() + 1];
        for (k, c) in coeffs.iter().enumerate() {
            next[k] += c * xi;
            next[k + 1] += c;
        }
        coeffs = next;
    }
    coeffs.pop();
    coeffs
}

pub fn hurwitz_from_poles(poles: &[f64], beta: f64) -> Result<HurwitzDesign> {
    if let Some(&bad) = poles.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::NonPositivePole(bad));
    }
    if poles.is_empty() {
        return Err(Error::validation("poles", "at least one pole is required (n >= 2)"));
    }
    if !(beta > 0.0) {
        return Err(Error::validation("beta", format!("beta = {beta} must be positive")));
    }
    let lambda_bar = DVector::from_vec(poly_from_poles(poles));
    let companion = companion(&lambda_bar);
    let m = poles.len();
    let p1 = linalg::solve_continuous_lyapunov(&companion, &(DMatrix::identity(m, m) * beta))?;
    Ok(HurwitzDesign {
        poles: poles.to_vec(),
        lambda_bar,
        companion,
        p1,
        beta,
    })
}

/// Every eigenvalue of the companion matrix has negative real part.
pub fn is_hurwitz(lambda_bar: &DVector<f64>) -> bool {
    if lambda_bar.is_empty() {
        return true;
    }
    companion(lambda_bar).complex_eigenvalues().iter().all(|z| z.re < 0.0)
}

/// Design matching a given `λ̄` (which need not come from real poles).
pub fn hurwitz_from_lambda(lambda_bar: &DVector<f64>, beta: f64) -> Result<HurwitzDesign> {
    if !is_hurwitz(lambda_bar) {
        return Err(Error::validation(
            "hurwitz",
            format!(
                "lambda = {:?} does not give a Hurwitz polynomial",
                lambda_bar.as_slice()
            ),
        ));
    }
    let companion = companion(lambda_bar);
    let m = lambda_bar.len();
    let p1 = linalg::solve_continuous_lyapunov(&companion, &(DMatrix::identity(m, m) * beta))?;
    Ok(HurwitzDesign {
        poles: Vec::new(),
        lambda_bar: lambda_bar.clone(),
        companion,
        p1,
        beta,
    })
}

/// Per-topology quantities entering the decay rate and the K matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyRate {
    pub id: usize,
    /// `½ α̲(Q)`.
    pub half_min_q: f64,
    /// `ᾱ(P) ᾱ(A) ‖λ̄‖ / α̲(D + B)`.
    pub coupling_term: f64,
    /// `s₂` of the symmetrised Laplacian.
    pub s2: f64,
    pub rho: f64,
    pub p_max: f64,
    pub p_min: f64,
    pub a_max: f64,
    pub degree_min: f64,
    pub coupling_max: f64,
    pub q_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub per_topology: Vec<TopologyRate>,
    pub rho0: f64,
}

pub fn topology_rate(
    id: usize,
    topology: &Topology,
    gl: &GraphLyapunov,
    nu1: f64,
    nu2: f64,
    lambda_bar: &DVector<f64>,
) -> Result<TopologyRate> {
    let m = graph::build_matrices(topology);
    let (_, a_max) = linalg::singular_extremes(topology.adjacency());
    let (degree_min, _) = linalg::singular_extremes(&(&m.degree + &m.leader));
    let (q_min, _) = linalg::singular_extremes(&gl.q_matrix);
    let (p_min, p_max) = linalg::singular_extremes(&gl.p);
    let (_, coupling_max) = linalg::singular_extremes(&graph::coupling_matrix(topology, nu1, nu2)?);
    let coupling_term = if a_max == 0.0 {
        0.0
    } else {
        p_max * a_max * lambda_bar.norm() / degree_min
    };
    let half_min_q = 0.5 * q_min;
    Ok(TopologyRate {
        id,
        half_min_q,
        coupling_term,
        s2: graph::algebraic_connectivity(topology),
        rho: half_min_q - coupling_term,
        p_max,
        p_min,
        a_max,
        degree_min,
        coupling_max,
        q_min,
    })
}

/// `ϱ_σ = ½α̲(Q) − ᾱ(P)ᾱ(A)‖λ̄‖/α̲(D+B)` per topology and the minimum `ϱ₀`.
pub fn decay_rate(topologies: &[Topology], nu1: f64, nu2: f64, lambda_bar: &DVector<f64>) -> Result<DecayReport> {
    let per_topology = topologies
        .iter()
        .enumerate()
        .map(|(id, t)| {
            let gl = graph::graph_lyapunov(t, nu1, nu2)?;
            topology_rate(id, t, &gl, nu1, nu2, lambda_bar)
        })
        .collect::<Result<Vec<_>>>()?;
    let rho0 = per_topology.iter().map(|r| r.rho).fold(f64::INFINITY, f64::min);
    Ok(DecayReport { per_topology, rho0 })
}

/// Singular-value extremes `(min, max)` of the weighting matrices for one topology.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpBounds {
    pub p: (f64, f64),
    pub p1: (f64, f64),
    pub g: (f64, f64),
    pub g0: (f64, f64),
    pub gw: (f64, f64),
}

impl JumpBounds {
    pub fn eta(&self) -> [f64; 5] {
        [
            self.p.0 / 2.0,
            1.0 / (2.0 * self.g.1),
            1.0 / (2.0 * self.g0.1),
            1.0 / (2.0 * self.gw.1),
            self.p1.0 / 2.0,
        ]
    }

    pub fn zeta(&self) -> [f64; 5] {
        [
            self.p.1 / 2.0,
            1.0 / (2.0 * self.g.0),
            1.0 / (2.0 * self.g0.0),
            1.0 / (2.0 * self.gw.0),
            self.p1.1 / 2.0,
        ]
    }

    pub fn eta_min(&self) -> f64 {
        self.eta().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn zeta_max(&self) -> f64 {
        self.zeta().iter().copied().fold(0.0, f64::max)
    }
}

/// `μ = max ᾱ(ζ_new)/α̲(η_old)` over all ordered pairs of topologies.
pub fn jump_factor(bounds: &[JumpBounds]) -> f64 {
    let mut mu: f64 = 1.0;
    for new in bounds {
        for old in bounds {
            mu = mu.max(new.zeta_max() / old.eta_min());
        }
    }
    mu
}

/// `τₐ* = −ln μ / ln(1 − ϱ₀)`.
pub fn min_dwell_time(mu: f64, rho0: f64) -> Result<f64> {
    if !(rho0 > 0.0 && rho0 < 1.0) {
        return Err(Error::InvalidDecayRate(rho0));
    }
    if !(mu >= 1.0) {
        return Err(Error::validation("jump factor", format!("mu = {mu} must be >= 1")));
    }
    if mu == 1.0 {
        return Ok(0.0);
    }
    Ok(-mu.ln() / (1.0 - rho0).ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DwellTimeReport {
    pub rho0: f64,
    pub mu: f64,
    /// `None` when the bound is inapplicable (`ϱ₀ ∉ (0, 1)`).
    pub tau_star: Option<f64>,
    pub per_topology: Vec<TopologyRate>,
    pub conclusive: bool,
}

/// Full dwell-time report from per-topology rates and jump bounds.
pub fn dwell_time_report(decay: &DecayReport, bounds: &[JumpBounds]) -> DwellTimeReport {
    let mu = jump_factor(bounds);
    let tau = min_dwell_time(mu, decay.rho0).ok();
    DwellTimeReport {
        rho0: decay.rho0,
        mu,
        tau_star: tau,
        per_topology: decay.per_topology.clone(),
        conclusive: tau.is_some(),
    }
}

/// Entries of the 5×5 matrix `K` and the vector `ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KEntries {
    pub beta: f64,
    pub kappa: f64,
    pub kappa_w: f64,
    pub kappa0: f64,
    pub mu1: f64,
    pub g: f64,
    pub gamma: [f64; 3],
    pub omega: [f64; 5],
}

/// `K` with the diagonal `(β/2, κ, κ_w, κ₀, μ₁)` and last row/column `(g, γ₁, γ₂, γ₃)`.
pub fn assemble_k(e: &KEntries) -> DMatrix<f64> {
    let mut k = DMatrix::from_diagonal(&DVector::from_vec(vec![
        e.beta / 2.0,
        e.kappa,
        e.kappa_w,
        e.kappa0,
        e.mu1,
    ]));
    let border = [e.g, e.gamma[0], e.gamma[1], e.gamma[2]];
    for (idx, v) in border.iter().enumerate() {
        k[(4, idx)] = *v;
        k[(idx, 4)] = *v;
    }
    k
}

/// Smallest `μ₁` keeping the fifth leading minor positive.
pub fn mu1_threshold(e: &KEntries) -> f64 {
    let d = [e.beta / 2.0, e.kappa, e.kappa_w, e.kappa0];
    let border = [e.g, e.gamma[0], e.gamma[1], e.gamma[2]];
    border.iter().zip(d).map(|(b, d)| b * b / d).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMatrixReport {
    pub k: DMatrix<f64>,
    pub entries: KEntries,
    pub minors: Vec<f64>,
    pub sylvester_ok: bool,
    /// 1-based index of the first non-positive leading minor.
    pub failing_minor: Option<usize>,
    pub min_singular: f64,
    pub omega_norm: f64,
    /// `‖ω‖₁ / α̲(K)`; meaningful only when `sylvester_ok`.
    pub b_d: f64,
    pub mu1_threshold: f64,
}

pub fn k_matrix_from_entries(entries: KEntries) -> KMatrixReport {
    let k = assemble_k(&entries);
    let minors = linalg::leading_minors(&k);
    let failing_minor = minors.iter().position(|m| !(*m > 0.0)).map(|i| i + 1);
    let (min_singular, _) = linalg::singular_extremes(&k);
    let omega_norm: f64 = entries.omega.iter().map(|v| v.abs()).sum();
    KMatrixReport {
        mu1_threshold: mu1_threshold(&entries),
        k,
        entries,
        minors,
        sylvester_ok: failing_minor.is_none(),
        failing_minor,
        min_singular,
        omega_norm,
        b_d: omega_norm / min_singular,
    }
}

/// Inputs to the K report not tied to the topology.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KInputs {
    pub beta: f64,
    pub kappa: f64,
    pub kappa_w: f64,
    pub kappa0: f64,
    /// Measured basis-norm envelopes `(Φₙ, Φₙw, Φₙ₀)`.
    pub phi: [f64; 3],
    /// Ideal-weight norm bounds `(Θₙ, Θₙw, Θₙ₀)`.
    pub theta: [f64; 3],
    /// Stand-in for the residual constants `T_M + T_N`.
    pub residual_bound: f64,
    /// Estimate of `c·E₀`.
    pub c_e0: f64,
}

/// Builds `K`, `ω` and `B_d` for one topology.
pub fn k_matrix_report(
    inputs: &KInputs,
    rate: &TopologyRate,
    lambda_bar: &DVector<f64>,
    design: &HurwitzDesign,
) -> KMatrixReport {
    let pa = rate.p_max * rate.a_max;
    let h = rate.coupling_term;
    let h_delta = if rate.a_max == 0.0 {
        0.0
    } else {
        pa * design.companion.norm() * lambda_bar.norm() / rate.degree_min
    };
    let (_, p1_max) = linalg::singular_extremes(&design.p1);
    let lambda_big = rate.p_max * rate.coupling_max * inputs.residual_bound + 0.5 * inputs.c_e0 * rate.q_min;
    let entries = KEntries {
        beta: inputs.beta,
        kappa: inputs.kappa,
        kappa_w: inputs.kappa_w,
        kappa0: inputs.kappa0,
        mu1: rate.half_min_q - h,
        g: -0.5 * (h_delta + p1_max),
        gamma: [
            -0.5 * inputs.phi[0] * pa,
            -0.5 * inputs.phi[1] * pa,
            -0.5 * inputs.phi[2] * pa,
        ],
        omega: [
            0.0,
            inputs.kappa * inputs.theta[0],
            inputs.kappa_w * inputs.theta[1],
            inputs.kappa0 * inputs.theta[2],
            lambda_big,
        ],
    };
    k_matrix_from_entries(entries)
}

/// The five components of the composite Lyapunov function.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VBreakdown {
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub v4: f64,
    pub v5: f64,
}

impl VBreakdown {
    pub fn total(&self) -> f64 {
        self.v1 + self.v2 + self.v3 + self.v4 + self.v5
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.v1, self.v2, self.v3, self.v4, self.v5]
    }
}

/// `½ tr(θ̃ᵀ G⁻¹ θ̃)`.
pub fn weighted_trace(err: &DMatrix<f64>, gain: &DMatrix<f64>) -> f64 {
    let solved = gain
        .clone()
        .cholesky()
        .map(|c| c.solve(err))
        .unwrap_or_else(|| gain.clone().lu().solve(err).unwrap_or_else(|| err.clone()));
    0.5 * err.dot(&solved)
}

/// Snapshot data entering the composite Lyapunov function.
#[derive(Debug, Clone)]
pub struct VSnapshot<'a> {
    /// Stacked `r` (`N·p`).
    pub r: &'a DVector<f64>,
    /// `E₁ = [e¹ … e^{n−1}]` (`N·p × (n−1)`).
    pub e1: &'a DMatrix<f64>,
    /// Per-agent weight errors `(θ̃ᵢ, θ̃ᵢ₀, θ̃ᵢw)`.
    pub weight_errors: &'a [[DMatrix<f64>; 3]],
    /// Per-agent gains `(Gᵢ, Gᵢ₀, Gᵢw)`.
    pub gains: &'a [[&'a DMatrix<f64>; 3]],
}

pub fn composite_v(snap: &VSnapshot<'_>, gl: &GraphLyapunov, p1: &DMatrix<f64>) -> VBreakdown {
    let n_agents = gl.q.len();
    let p = snap.r.len() / n_agents.max(1);
    let mut v1 = 0.0;
    for i in 0..n_agents {
        v1 += 0.5 * gl.p_i(i) * snap.r.rows(i * p, p).norm_squared();
    }
    let mut parts = [0.0; 3];
    for (errs, gains) in snap.weight_errors.iter().zip(snap.gains) {
        for c in 0..3 {
            parts[c] += weighted_trace(&errs[c], gains[c]);
        }
    }
    let v5 = 0.5 * (snap.e1 * p1 * snap.e1.transpose()).trace();
    VBreakdown {
        v1,
        v2: parts[0],
        v3: parts[1],
        v4: parts[2],
        v5,
    }
}

/// `ι = 1 / (1 + γ(κ_max − s₂))`.
pub fn iota(s2: f64, gamma: f64, kappa_max: f64) -> f64 {
    1.0 / (1.0 + gamma * (kappa_max - s2))
}
