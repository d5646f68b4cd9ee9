//! Scenario-level stability reports built from a configuration and,
//! where envelopes must be measured, a simulated trace.

use nalgebra::DVector;

use crate::analysis::{self, DwellTimeReport, JumpBounds, KInputs, KMatrixReport};
use crate::controller;
use crate::error::Result;
use crate::graph;
use crate::linalg;
use crate::sim::{self, IdealWeights, SimConfig, SimTrace};

/// Knobs of the post-hoc analysis. Unset envelopes are measured from a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisSettings {
    /// Stand-in for the approximation residual constants.
    pub residual_bound: f64,
    /// `γ` in the connectivity weight `ι`.
    pub iota_gamma: f64,
    /// `κ_max` in `ι`; defaults to the largest `s₂` over the topologies.
    pub kappa_max: Option<f64>,
    /// `(Φₙ, Φₙw, Φₙ₀)`.
    pub phi_bounds: Option<[f64; 3]>,
    /// `(Θₙ, Θₙw, Θₙ₀)`.
    pub theta_bounds: Option<[f64; 3]>,
    pub c_e0: Option<f64>,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            residual_bound: 0.0,
            iota_gamma: 1.0,
            kappa_max: None,
            phi_bounds: None,
            theta_bounds: None,
            c_e0: None,
        }
    }
}

impl AnalysisSettings {
    pub fn needs_trace(&self) -> bool {
        self.phi_bounds.is_none() || self.theta_bounds.is_none() || self.c_e0.is_none()
    }
}

/// Singular-value extremes of `P`, `P₁` and the adaptation gains per topology.
pub fn jump_bounds(config: &SimConfig) -> Result<Vec<JumpBounds>> {
    let extremes = |pick: fn(&sim::AgentGains) -> &nalgebra::DMatrix<f64>| {
        config.gains.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), g| {
            let (a, b) = linalg::singular_extremes(pick(g));
            (lo.min(a), hi.max(b))
        })
    };
    let g = extremes(|g| &g.state.gain);
    let g0 = extremes(|g| &g.leader.gain);
    let gw = extremes(|g| &g.disturbance.gain);
    let p1 = linalg::singular_extremes(&config.design.p1);
    config
        .topologies
        .iter()
        .map(|t| {
            let gl = graph::graph_weights(t, config.params.nu1, config.params.nu2)?;
            Ok(JumpBounds {
                p: linalg::singular_extremes(&gl.p),
                p1,
                g,
                g0,
                gw,
            })
        })
        .collect()
}

/// Dwell-time report of the configured topology set.
pub fn dwell_time(config: &SimConfig) -> Result<DwellTimeReport> {
    let decay = analysis::decay_rate(
        &config.topologies,
        config.params.nu1,
        config.params.nu2,
        &config.params.lambda_bar,
    )?;
    Ok(analysis::dwell_time_report(&decay, &jump_bounds(config)?))
}

/// Smallest leakage of each estimator across followers, `(κ, κ_w, κ₀)`.
fn min_kappas(config: &SimConfig) -> (f64, f64, f64) {
    config
        .gains
        .iter()
        .fold((f64::INFINITY, f64::INFINITY, f64::INFINITY), |(a, b, c), g| {
            (a.min(g.state.kappa), b.min(g.disturbance.kappa), c.min(g.leader.kappa))
        })
}

/// Envelopes of the bases, ideal weights and `c·E₀` along a trace.
pub fn measure_k_inputs(config: &SimConfig, trace: &SimTrace, ideal: &[IdealWeights]) -> Result<KInputs> {
    let mut phi = [0.0f64; 3];
    let mut c_e0 = 0.0f64;
    let (n, p) = (config.order, config.dim);
    for s in &trace.samples {
        let mut e0 = DVector::zeros(config.n_agents() * n * p);
        for i in 0..config.n_agents() {
            phi[0] = phi[0].max(config.bases.state.eval(&s.followers[i], s.t)?.norm());
            phi[1] = phi[1].max(config.bases.disturbance.eval(&s.followers[i], s.t)?.norm());
            for k in 0..n {
                let d = controller::tracking_error(i, k, &s.followers, &s.leader, &config.formation);
                e0.rows_mut((i * n + k) * p, p).copy_from(&d);
            }
        }
        phi[2] = phi[2].max(config.bases.leader.eval(&s.leader, s.t)?.norm());
        c_e0 = c_e0.max(e0.norm());
    }
    let c_norm = config
        .params
        .c_gain
        .iter()
        .map(|c| linalg::singular_extremes(c).1)
        .fold(0.0, f64::max);
    let theta = ideal.iter().fold([0.0f64; 3], |acc, w| {
        [
            acc[0].max(w[0].norm()),
            acc[1].max(w[2].norm()),
            acc[2].max(w[1].norm()),
        ]
    });
    let (kappa, kappa_w, kappa0) = min_kappas(config);
    Ok(KInputs {
        beta: config.design.beta,
        kappa,
        kappa_w,
        kappa0,
        phi,
        theta,
        residual_bound: config.analysis.residual_bound,
        c_e0: c_norm * c_e0,
    })
}

/// `KInputs` from the configured envelopes, filling gaps from `measured`.
pub fn k_inputs(config: &SimConfig, measured: Option<&KInputs>) -> KInputs {
    let (kappa, kappa_w, kappa0) = min_kappas(config);
    let a = &config.analysis;
    KInputs {
        beta: config.design.beta,
        kappa,
        kappa_w,
        kappa0,
        phi: a.phi_bounds.or(measured.map(|m| m.phi)).unwrap_or([0.0; 3]),
        theta: a.theta_bounds.or(measured.map(|m| m.theta)).unwrap_or([0.0; 3]),
        residual_bound: a.residual_bound,
        c_e0: a.c_e0.or(measured.map(|m| m.c_e0)).unwrap_or(0.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub dwell: DwellTimeReport,
    pub k_inputs: KInputs,
    /// One K report per topology.
    pub k_reports: Vec<KMatrixReport>,
    /// `ι` per topology.
    pub iota: Vec<f64>,
}

impl AnalysisReport {
    /// Largest `B_d` over the topologies.
    pub fn b_d(&self) -> f64 {
        self.k_reports.iter().map(|k| k.b_d).fold(0.0, f64::max)
    }
}

/// Dwell-time, K-matrix and connectivity report of a scenario.
pub fn analyze(config: &SimConfig, inputs: &KInputs) -> Result<AnalysisReport> {
    let dwell = dwell_time(config)?;
    let k_reports = dwell
        .per_topology
        .iter()
        .map(|rate| analysis::k_matrix_report(inputs, rate, &config.params.lambda_bar, &config.design))
        .collect();
    let kappa_max = config
        .analysis
        .kappa_max
        .unwrap_or_else(|| dwell.per_topology.iter().map(|r| r.s2).fold(0.0, f64::max));
    let iota = dwell
        .per_topology
        .iter()
        .map(|r| analysis::iota(r.s2, config.analysis.iota_gamma, kappa_max))
        .collect();
    Ok(AnalysisReport {
        dwell,
        k_inputs: *inputs,
        k_reports,
        iota,
    })
}

/// Runs the scenario when envelopes are missing, then analyzes it.
pub fn analyze_scenario(config: &SimConfig) -> Result<AnalysisReport> {
    let measured = if config.analysis.needs_trace() {
        let trace = sim::simulate(config)?;
        let ideal = sim::fit_ideal_weights(config, &trace)?;
        Some(measure_k_inputs(config, &trace, &ideal)?)
    } else {
        None
    };
    analyze(config, &k_inputs(config, measured.as_ref()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario;

    #[test]
    fn default_topologies_give_inconclusive_dwell_time() {
        let c = scenario::reference_config();
        let rep = dwell_time(&c).unwrap();
        assert_eq!(rep.per_topology.len(), 4);
        assert!(rep.mu >= 1.0);
        // every default topology has ϱ_σ < 0 at the default gains
        assert!(rep.rho0 < 0.0);
        assert!(rep.tau_star.is_none() && !rep.conclusive);
    }

    #[test]
    fn explicit_envelopes_skip_the_run() {
        let mut c = scenario::reference_config();
        c.analysis.phi_bounds = Some([1.0, 1.0, 1.0]);
        c.analysis.theta_bounds = Some([0.5, 0.5, 0.5]);
        c.analysis.c_e0 = Some(0.0);
        assert!(!c.analysis.needs_trace());
        let rep = analyze_scenario(&c).unwrap();
        assert_eq!(rep.k_reports.len(), 4);
        assert_eq!(rep.iota.len(), 4);
        assert!(rep.iota.iter().all(|v| *v > 0.0 && *v <= 1.0));
        assert_eq!(rep.k_inputs.phi, [1.0; 3]);
    }
}
