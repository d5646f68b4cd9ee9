//! Synchronization errors, repulsive potentials and the distributed control law.
//!
//! Derivative orders are 0-based in this module: `k = 0` is position.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::AgentState;
use crate::error::{Error, Result};
use crate::graph::{self, Topology};
use crate::linalg;
use crate::nn::{self, BasisSet, NNBank};

/// Separations below this are treated as a collision.
pub const SEPARATION_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct FormationSpec {
    /// Offsets `ψᵢ` of every follower.
    pub offsets: Vec<AgentState>,
    /// Offset `ψ₀` of the leader.
    pub leader_offset: AgentState,
    /// Pairwise collision thresholds `ψᵢⱼ`.
    pub pair_thresholds: DMatrix<f64>,
    /// Follower-leader thresholds `ψᵢ₀`.
    pub leader_thresholds: DVector<f64>,
    /// Repulsion strength `ϖ`.
    pub varpi: f64,
}

impl FormationSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.offsets.len();
        let t = &self.pair_thresholds;
        if t.shape() != (n, n) || self.leader_thresholds.len() != n {
            return Err(Error::dims(format!(
                "{n} offsets with thresholds {:?} and {} leader thresholds",
                t.shape(),
                self.leader_thresholds.len()
            )));
        }
        for i in 0..n {
            if t[(i, i)] != 0.0 {
                return Err(Error::validation("pair thresholds", "diagonal must be zero"));
            }
            for j in 0..n {
                if i != j && (!(t[(i, j)] > 0.0) || t[(i, j)] != t[(j, i)]) {
                    return Err(Error::validation(
                        "pair thresholds",
                        format!("psi_{}{} must be positive and symmetric", i + 1, j + 1),
                    ));
                }
            }
        }
        if self.leader_thresholds.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::validation("leader thresholds", "must be positive"));
        }
        if !(self.varpi > 0.0) {
            return Err(Error::validation("repulsion strength", "varpi must be positive"));
        }
        let (order, dim) = (self.leader_offset.order(), self.leader_offset.dim());
        if self.offsets.iter().any(|o| o.order() != order || o.dim() != dim) {
            return Err(Error::dims("formation offsets have inconsistent shapes"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleSet {
    pub centers: Vec<DVector<f64>>,
    pub outer_radius: f64,
    pub inner_radius: f64,
}

impl ObstacleSet {
    pub fn empty() -> Self {
        Self {
            centers: Vec::new(),
            outer_radius: 1.0,
            inner_radius: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inner_radius > 0.0 && self.inner_radius < self.outer_radius) {
            return Err(Error::validation(
                "inner radius",
                format!(
                    "need 0 < inner radius ({}) < outer radius ({})",
                    self.inner_radius, self.outer_radius
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlParams {
    pub nu1: f64,
    pub nu2: f64,
    /// `λ₁ … λ_{n−1}`; `λₙ = 1` is implicit.
    pub lambda_bar: DVector<f64>,
    /// One `p × n·p` gain per follower.
    pub c_gain: Vec<DMatrix<f64>>,
    pub gamma0: DMatrix<f64>,
    pub gamma1: DMatrix<f64>,
    pub gamma2: DMatrix<f64>,
}

impl ControlParams {
    /// `[c·I … c·I]` for every follower.
    pub fn uniform_c(n_agents: usize, n: usize, p: usize, c: f64) -> Vec<DMatrix<f64>> {
        let mut block = DMatrix::zeros(p, n * p);
        for k in 0..n {
            for d in 0..p {
                block[(d, k * p + d)] = c;
            }
        }
        vec![block; n_agents]
    }

    /// `λ₁ … λ_{n−1}, 1`.
    pub fn lambda_full(&self) -> Vec<f64> {
        let mut l: Vec<f64> = self.lambda_bar.iter().copied().collect();
        l.push(1.0);
        l
    }

    pub fn validate(&self, n_agents: usize, n: usize, p: usize) -> Result<()> {
        if !(self.nu1 > 0.0 && self.nu2 > 0.0) {
            return Err(Error::validation("coupling gains", "nu1 and nu2 must be positive"));
        }
        if self.lambda_bar.len() + 1 != n {
            return Err(Error::dims(format!(
                "{} lambda coefficients for order {n}",
                self.lambda_bar.len()
            )));
        }
        if self.c_gain.len() != n_agents || self.c_gain.iter().any(|c| c.shape() != (p, n * p)) {
            return Err(Error::dims("c gains must be one p x n*p matrix per follower"));
        }
        for (name, g) in [
            ("gamma0", &self.gamma0),
            ("gamma1", &self.gamma1),
            ("gamma2", &self.gamma2),
        ] {
            if g.shape() != (p, p) || !linalg::is_spd(g, 1e-12) {
                return Err(Error::validation(
                    "repulsion gains",
                    format!("{name} must be a symmetric positive-definite {p}x{p} matrix"),
                ));
            }
        }
        Ok(())
    }
}

fn shifted(x: &AgentState, offset: &AgentState, k: usize) -> DVector<f64> {
    x.block(k) - offset.block(k)
}

/// Leader-relative error `δᵢᵏ = x̄ᵢᵏ − x̄₀ᵏ`.
pub fn tracking_error(
    i: usize,
    k: usize,
    followers: &[AgentState],
    leader: &AgentState,
    formation: &FormationSpec,
) -> DVector<f64> {
    shifted(&followers[i], &formation.offsets[i], k) - shifted(leader, &formation.leader_offset, k)
}

/// Weighted synchronization error `eᵢᵏ`.
pub fn sync_error(
    i: usize,
    k: usize,
    followers: &[AgentState],
    leader: &AgentState,
    topology: &Topology,
    params: &ControlParams,
    formation: &FormationSpec,
) -> Result<DVector<f64>> {
    if followers.len() != topology.n_agents() || formation.offsets.len() != followers.len() {
        return Err(Error::dims(format!(
            "{} followers, {} topology nodes, {} offsets",
            followers.len(),
            topology.n_agents(),
            formation.offsets.len()
        )));
    }
    if k >= leader.order() {
        return Err(Error::dims(format!("order {} exceeds n = {}", k + 1, leader.order())));
    }
    let xi = shifted(&followers[i], &formation.offsets[i], k);
    let mut e = DVector::zeros(leader.dim());
    for j in 0..followers.len() {
        let a = topology.a(i, j);
        if a != 0.0 {
            e -= (&xi - shifted(&followers[j], &formation.offsets[j], k)) * (params.nu1 * a);
        }
    }
    let b = topology.b(i);
    if b != 0.0 {
        e -= (&xi - shifted(leader, &formation.leader_offset, k)) * (params.nu2 * b);
    }
    Ok(e)
}

/// `eᵏ = −(ν₁L + ν₂B)⊗I (x̄ᵏ − 1⊗x̄₀ᵏ)`, via the matrix form.
pub fn global_sync_error(
    k: usize,
    followers: &[AgentState],
    leader: &AgentState,
    topology: &Topology,
    params: &ControlParams,
    formation: &FormationSpec,
) -> Result<DVector<f64>> {
    let m = graph::build_matrices(topology);
    let coupling = m.laplacian * params.nu1 + m.leader * params.nu2;
    let p = leader.dim();
    let n_agents = followers.len();
    if coupling.nrows() != n_agents {
        return Err(Error::dims("topology size differs from follower count"));
    }
    let mut rel = DVector::zeros(n_agents * p);
    for i in 0..n_agents {
        rel.rows_mut(i * p, p)
            .copy_from(&tracking_error(i, k, followers, leader, formation));
    }
    Ok(-linalg::kron_identity_apply(&coupling, p, &rel))
}

/// `rᵢ = Σ λₖ eᵢᵏ` and `ρᵢ = Σ λₖ₋₁ eᵢᵏ` for `k ≥ 2`, given all orders of `eᵢ`.
pub fn combine_errors(errors: &[DVector<f64>], lambda_bar: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = errors.len();
    let p = errors[0].len();
    let mut r = errors[n - 1].clone();
    let mut rho = DVector::zeros(p);
    for k in 0..n - 1 {
        r += &errors[k] * lambda_bar[k];
        rho += &errors[k + 1] * lambda_bar[k];
    }
    (r, rho)
}

/// Weighted stability error `(rᵢ, ρᵢ)`.
pub fn stability_error(
    i: usize,
    followers: &[AgentState],
    leader: &AgentState,
    topology: &Topology,
    params: &ControlParams,
    formation: &FormationSpec,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let errors = (0..leader.order())
        .map(|k| sync_error(i, k, followers, leader, topology, params, formation))
        .collect::<Result<Vec<_>>>()?;
    Ok(combine_errors(&errors, &params.lambda_bar))
}

/// Agent-agent (or agent-leader) potential `ϖ/d` inside the threshold.
pub fn potential_agent(xi1: &DVector<f64>, xj1: &DVector<f64>, psi: f64, varpi: f64) -> Result<f64> {
    let d = (xi1 - xj1).norm();
    if !(d >= SEPARATION_FLOOR) {
        return Err(Error::ZeroSeparation { distance: d });
    }
    Ok(if d > psi { 0.0 } else { varpi / d })
}

/// Obstacle potential `[(R² − d²)/(d² − 𝔏²)]²` inside the detection radius.
pub fn potential_obstacle(xi1: &DVector<f64>, center: &DVector<f64>, outer: f64, inner: f64) -> Result<f64> {
    let d = (xi1 - center).norm();
    if !(d > inner) {
        return Err(Error::InnerRadiusBreach {
            distance: d,
            inner_radius: inner,
        });
    }
    if d > outer {
        return Ok(0.0);
    }
    let d2 = d * d;
    Ok(((outer * outer - d2) / (d2 - inner * inner)).powi(2))
}

/// Static data shared by every agent's control evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ControlContext<'a> {
    pub topology: &'a Topology,
    pub params: &'a ControlParams,
    pub formation: &'a FormationSpec,
    pub obstacles: &'a ObstacleSet,
    pub bases: &'a BasisSet,
}

/// Each term's signed contribution to `uᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTerms {
    pub feedforward: DVector<f64>,
    pub nn_state: DVector<f64>,
    pub nn_disturbance: DVector<f64>,
    pub nn_leader: DVector<f64>,
    pub sync: DVector<f64>,
    pub leader_tracking: DVector<f64>,
    pub obstacle: DVector<f64>,
    pub agent: DVector<f64>,
    pub leader_repulsion: DVector<f64>,
}

impl ControlTerms {
    /// Everything except the repulsive channels.
    pub fn nominal(&self) -> DVector<f64> {
        &self.feedforward + &self.nn_state + &self.nn_disturbance + &self.nn_leader + &self.sync + &self.leader_tracking
    }

    pub fn repulsive(&self) -> DVector<f64> {
        &self.obstacle + &self.agent + &self.leader_repulsion
    }

    pub fn total(&self) -> DVector<f64> {
        self.nominal() + self.repulsive()
    }
}

fn unit_away(from: &DVector<f64>, hazard: &DVector<f64>) -> DVector<f64> {
    let diff = from - hazard;
    let n = diff.norm();
    diff / n
}

/// Repulsive contributions to `uᵢ`, each pushing agent `i` away from its hazard.
pub fn repulsion_terms(
    i: usize,
    followers: &[AgentState],
    leader: &AgentState,
    ctx: &ControlContext<'_>,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let p = leader.dim();
    let xi = followers[i].position();
    let f = ctx.formation;
    let mut obstacle = DVector::zeros(p);
    for c in &ctx.obstacles.centers {
        let m = potential_obstacle(&xi, c, ctx.obstacles.outer_radius, ctx.obstacles.inner_radius)?;
        if m != 0.0 {
            obstacle += &ctx.params.gamma0 * unit_away(&xi, c) * m;
        }
    }
    let mut agent = DVector::zeros(p);
    for (j, other) in followers.iter().enumerate() {
        if j == i {
            continue;
        }
        let xj = other.position();
        let m = potential_agent(&xi, &xj, f.pair_thresholds[(i, j)], f.varpi)?;
        if m != 0.0 {
            agent += &ctx.params.gamma1 * unit_away(&xi, &xj) * m;
        }
    }
    let x0 = leader.position();
    let m = potential_agent(&xi, &x0, f.leader_thresholds[i], f.varpi)?;
    let leader_repulsion = if m != 0.0 {
        &ctx.params.gamma2 * unit_away(&xi, &x0) * m
    } else {
        DVector::zeros(p)
    };
    Ok((obstacle, agent, leader_repulsion))
}

/// All terms of the distributed control law for follower `i`.
pub fn control_terms(
    i: usize,
    t: f64,
    followers: &[AgentState],
    leader: &AgentState,
    ctx: &ControlContext<'_>,
    bank: &NNBank,
) -> Result<ControlTerms> {
    let topo = ctx.topology;
    let degree_sum = topo.degree_sum(i);
    if !(degree_sum > 0.0) {
        return Err(Error::IsolatedAgent(i + 1));
    }
    let (r, rho) = stability_error(i, followers, leader, topo, ctx.params, ctx.formation)?;
    let n = leader.order();
    let p = leader.dim();
    let mut e_i0 = DVector::zeros(n * p);
    for k in 0..n {
        e_i0.rows_mut(k * p, p)
            .copy_from(&tracking_error(i, k, followers, leader, ctx.formation));
    }
    let phi = ctx.bases.state.eval(&followers[i], t)?;
    let phi0 = ctx.bases.leader.eval(leader, t)?;
    let phiw = ctx.bases.disturbance.eval(&followers[i], t)?;
    let (obstacle, agent, leader_repulsion) = repulsion_terms(i, followers, leader, ctx)?;
    Ok(ControlTerms {
        feedforward: rho / degree_sum,
        nn_state: -nn::estimate(&bank.theta_hat, &phi)?,
        nn_disturbance: -nn::estimate(&bank.thetaw_hat, &phiw)?,
        nn_leader: nn::estimate(&bank.theta0_hat, &phi0)?,
        sync: r,
        leader_tracking: -(&ctx.params.c_gain[i] * e_i0),
        obstacle,
        agent,
        leader_repulsion,
    })
}

pub fn control_input(
    i: usize,
    t: f64,
    followers: &[AgentState],
    leader: &AgentState,
    ctx: &ControlContext<'_>,
    bank: &NNBank,
) -> Result<DVector<f64>> {
    control_terms(i, t, followers, leader, ctx, bank).map(|c| c.total())
}
