//! Barrier functions, Lie-derivative structure checks, the repulsion gain
//! rule and trace-level separation monitoring.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::controller::{self, FormationSpec, ObstacleSet};
use crate::dynamics::{AgentState, DynamicsModel};
use crate::error::{Error, Result};
use crate::sim::{SimConfig, SimTrace};

/// Which separation a barrier guards. Indices are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BarrierKind {
    Pair(usize, usize),
    Leader(usize),
    /// `(agent, obstacle)`.
    Obstacle(usize, usize),
}

impl std::fmt::Display for BarrierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Pair(i, j) => write!(f, "pair({},{})", i + 1, j + 1),
            Self::Leader(i) => write!(f, "leader({})", i + 1),
            Self::Obstacle(i, c) => write!(f, "obstacle({},{})", i + 1, c + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Barrier {
    pub kind: BarrierKind,
    pub threshold: f64,
}

impl Barrier {
    pub fn new(kind: BarrierKind, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0) {
            return Err(Error::validation(
                "barrier threshold",
                format!("{threshold} must be positive"),
            ));
        }
        Ok(Self { kind, threshold })
    }

    /// Every pair, leader and obstacle barrier of a scenario.
    pub fn all(formation: &FormationSpec, obstacles: &ObstacleSet) -> Vec<Barrier> {
        let n = formation.offsets.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                out.push(Barrier {
                    kind: BarrierKind::Pair(i, j),
                    threshold: formation.pair_thresholds[(i, j)],
                });
            }
            out.push(Barrier {
                kind: BarrierKind::Leader(i),
                threshold: formation.leader_thresholds[i],
            });
            for c in 0..obstacles.centers.len() {
                out.push(Barrier {
                    kind: BarrierKind::Obstacle(i, c),
                    threshold: obstacles.outer_radius,
                });
            }
        }
        out
    }

    /// Agent `i` and the position of the hazard it is kept from.
    fn endpoints(
        &self,
        followers: &[AgentState],
        leader: &AgentState,
        obstacles: &ObstacleSet,
    ) -> (DVector<f64>, DVector<f64>) {
        match self.kind {
            BarrierKind::Pair(i, j) => (followers[i].position(), followers[j].position()),
            BarrierKind::Leader(i) => (followers[i].position(), leader.position()),
            BarrierKind::Obstacle(i, c) => (followers[i].position(), obstacles.centers[c].clone()),
        }
    }

    pub fn distance(&self, followers: &[AgentState], leader: &AgentState, obstacles: &ObstacleSet) -> f64 {
        let (a, b) = self.endpoints(followers, leader, obstacles);
        (a - b).norm()
    }
}

/// Distance minus threshold; non-negative means safe.
pub fn barrier_value(barrier: &Barrier, followers: &[AgentState], leader: &AgentState, obstacles: &ObstacleSet) -> f64 {
    barrier.distance(followers, leader, obstacles) - barrier.threshold
}

/// `I − n nᵀ` for a unit vector `n`.
pub fn projector(n: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::identity(n.len(), n.len()) - n * n.transpose()
}

/// Relative position, velocity and acceleration of the two barrier endpoints.
fn relative_blocks(barrier: &Barrier, followers: &[AgentState], leader: &AgentState) -> [DVector<f64>; 3] {
    let a = |x: &AgentState, k| {
        if x.order() > k {
            x.block(k)
        } else {
            DVector::zeros(x.dim())
        }
    };
    match barrier.kind {
        BarrierKind::Pair(i, j) => [0, 1, 2].map(|k| a(&followers[i], k) - a(&followers[j], k)),
        BarrierKind::Leader(i) => [0, 1, 2].map(|k| a(&followers[i], k) - a(leader, k)),
        BarrierKind::Obstacle(i, _) => [0, 1, 2].map(|k| a(&followers[i], k)),
    }
}

/// Closed forms `(L_F h, L_F² h)`: `nᵀΔv` and `(1/s)Δvᵀ(I − nnᵀ)Δv + nᵀΔa`.
pub fn analytic_lie(
    barrier: &Barrier,
    followers: &[AgentState],
    leader: &AgentState,
    obstacles: &ObstacleSet,
) -> Result<(f64, f64)> {
    let (xi, xj) = barrier.endpoints(followers, leader, obstacles);
    let ell = xi - xj;
    let s = ell.norm();
    if !(s >= controller::SEPARATION_FLOOR) {
        return Err(Error::AdmissibilityViolation(format!(
            "separation {s:e} for {}",
            barrier.kind
        )));
    }
    let n = &ell / s;
    let [_, dv, da] = relative_blocks(barrier, followers, leader);
    let first = n.dot(&dv);
    let second = (dv.transpose() * projector(&n) * &dv)[(0, 0)] / s + n.dot(&da);
    Ok((first, second))
}

/// The drift part of the joint dynamics of all followers and the leader.
#[derive(Debug, Clone, Copy)]
pub struct DriftField<'a> {
    pub follower_models: &'a [DynamicsModel],
    pub leader_model: &'a DynamicsModel,
    pub t: f64,
}

impl DriftField<'_> {
    fn eval(&self, followers: &[AgentState], leader: &AgentState) -> Result<(Vec<AgentState>, AgentState)> {
        let shift = |x: &AgentState, top: DVector<f64>| {
            let mut out = AgentState::zeros(x.order(), x.dim());
            for k in 0..x.order() - 1 {
                out.set_block(k, &x.block(k + 1));
            }
            out.set_block(x.order() - 1, &top);
            out
        };
        let f = followers
            .iter()
            .zip(self.follower_models)
            .map(|(x, m)| Ok(shift(x, m.drift(x, self.t)?)))
            .collect::<Result<Vec<_>>>()?;
        let l = shift(leader, self.leader_model.drift(leader, self.t)?);
        Ok((f, l))
    }
}

fn axpy_state(xs: &[AgentState], dx: &[AgentState], eps: f64) -> Vec<AgentState> {
    xs.iter()
        .zip(dx)
        .map(|(x, d)| {
            let mut y = x.clone();
            for (a, b) in y.as_mut_slice().iter_mut().zip(d.as_slice()) {
                *a += eps * b;
            }
            y
        })
        .collect()
}

/// Nested central differences: `L_F^υ g` with a common step.
fn lie_drift_nested<G>(
    g: &G,
    field: &DriftField<'_>,
    followers: &[AgentState],
    leader: &AgentState,
    order: usize,
    eps: f64,
) -> Result<f64>
where
    G: Fn(&[AgentState], &AgentState) -> Result<f64>,
{
    if order == 0 {
        return g(followers, leader);
    }
    let (df, dl) = field.eval(followers, leader)?;
    let lead = |s: f64| {
        let mut l = leader.clone();
        for (a, b) in l.as_mut_slice().iter_mut().zip(dl.as_slice()) {
            *a += s * b;
        }
        l
    };
    let plus = lie_drift_nested(g, field, &axpy_state(followers, &df, eps), &lead(eps), order - 1, eps)?;
    let minus = lie_drift_nested(g, field, &axpy_state(followers, &df, -eps), &lead(-eps), order - 1, eps)?;
    Ok((plus - minus) / (2.0 * eps))
}

/// `L_{F_u} L_F^υ h` along input direction `dir` applied to follower `agent`.
fn lie_input(
    barrier: &Barrier,
    obstacles: &ObstacleSet,
    field: &DriftField<'_>,
    followers: &[AgentState],
    leader: &AgentState,
    upsilon: usize,
    agent: usize,
    dir: &DVector<f64>,
    eps: f64,
) -> Result<f64> {
    let h = |f: &[AgentState], l: &AgentState| Ok(barrier_value(barrier, f, l, obstacles));
    let top = followers[agent].order() - 1;
    let bump = |s: f64| {
        let mut f = followers.to_vec();
        let block = f[agent].block(top) + dir * s;
        f[agent].set_block(top, &block);
        f
    };
    let plus = lie_drift_nested(&h, field, &bump(eps), leader, upsilon, eps)?;
    let minus = lie_drift_nested(&h, field, &bump(-eps), leader, upsilon, eps)?;
    Ok((plus - minus) / (2.0 * eps))
}

/// Richardson extrapolation of an even-order central difference.
fn richardson<F: Fn(f64) -> Result<f64>>(f: F, eps: f64) -> Result<f64> {
    let coarse = f(eps)?;
    let fine = f(eps / 2.0)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Base step of the nested finite differences.
pub const LIE_STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct LieReport {
    /// `max |L_{F_u} L_F^υ h|` over the inputs of the involved agents, `υ = 0 … n−1`.
    pub input_terms: Vec<f64>,
    pub drift_first_numeric: f64,
    pub drift_first_analytic: f64,
    pub drift_second_numeric: f64,
    pub drift_second_analytic: f64,
}

impl LieReport {
    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1.0)
    }

    pub fn first_rel_error(&self) -> f64 {
        Self::rel(self.drift_first_numeric, self.drift_first_analytic)
    }

    pub fn second_rel_error(&self) -> f64 {
        Self::rel(self.drift_second_numeric, self.drift_second_analytic)
    }

    /// Low orders vanish below `zero_tol`, the top order exceeds `top_min`.
    pub fn relative_degree_ok(&self, zero_tol: f64, top_min: f64) -> bool {
        let (top, low) = self.input_terms.split_last().expect("order >= 1");
        low.iter().all(|v| *v < zero_tol) && *top > top_min
    }
}

/// Numerically probes the relative-degree structure of a barrier.
pub fn lie_chain_check(
    field: &DriftField<'_>,
    barrier: &Barrier,
    followers: &[AgentState],
    leader: &AgentState,
    obstacles: &ObstacleSet,
) -> Result<LieReport> {
    let h0 = barrier_value(barrier, followers, leader, obstacles);
    if !(h0 >= 0.0) {
        return Err(Error::AdmissibilityViolation(format!(
            "{} has h = {h0:.3e} < 0",
            barrier.kind
        )));
    }
    let (drift_first_analytic, drift_second_analytic) = analytic_lie(barrier, followers, leader, obstacles)?;
    let n = followers[0].order();
    let p = followers[0].dim();
    let h = |f: &[AgentState], l: &AgentState| Ok(barrier_value(barrier, f, l, obstacles));
    let drift_first_numeric = richardson(|e| lie_drift_nested(&h, field, followers, leader, 1, e), LIE_STEP)?;
    let drift_second_numeric = richardson(|e| lie_drift_nested(&h, field, followers, leader, 2, e), LIE_STEP)?;
    let agents: Vec<usize> = match barrier.kind {
        BarrierKind::Pair(i, j) => vec![i, j],
        BarrierKind::Leader(i) | BarrierKind::Obstacle(i, _) => vec![i],
    };
    let mut input_terms = Vec::with_capacity(n);
    for upsilon in 0..n {
        let mut worst: f64 = 0.0;
        for &a in &agents {
            for d in 0..p {
                let mut dir = DVector::zeros(p);
                dir[d] = 1.0;
                let v = richardson(
                    |e| lie_input(barrier, obstacles, field, followers, leader, upsilon, a, &dir, e),
                    LIE_STEP,
                )?;
                worst = worst.max(v.abs());
            }
        }
        input_terms.push(worst);
    }
    Ok(LieReport {
        input_terms,
        drift_first_numeric,
        drift_first_analytic,
        drift_second_numeric,
        drift_second_analytic,
    })
}

/// Bounds entering the explicit repulsion-gain rule for one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainRuleInputs {
    pub w_bound: f64,
    pub rest_bound: f64,
    pub drift_bound: f64,
    pub cross_bound: f64,
    pub psi: f64,
    pub varpi: f64,
}

/// `[(w + 𝔈 + 𝔇)ψ] / (2ϖ − ℜψ)`; the chosen gain must exceed it strictly.
pub fn gain_rule(inputs: &GainRuleInputs) -> Result<f64> {
    let b = [
        inputs.w_bound,
        inputs.rest_bound,
        inputs.drift_bound,
        inputs.cross_bound,
    ];
    if b.iter().any(|v| !(*v >= 0.0)) || !(inputs.psi > 0.0) || !(inputs.varpi > 0.0) {
        return Err(Error::validation(
            "gain rule inputs",
            "bounds must be >= 0, psi and varpi > 0",
        ));
    }
    let denom = 2.0 * inputs.varpi - inputs.cross_bound * inputs.psi;
    if !(denom > 0.0) {
        return Err(Error::RuleInapplicable(denom));
    }
    Ok((inputs.w_bound + inputs.rest_bound + inputs.drift_bound) * inputs.psi / denom)
}

/// Sum of unscaled pair repulsions `Σ m_iq n_iq` on agent `i`, skipping `skip`.
fn cross_repulsion(i: usize, skip: usize, followers: &[AgentState], formation: &FormationSpec) -> Result<DVector<f64>> {
    let xi = followers[i].position();
    let mut acc = DVector::zeros(xi.len());
    for (q, other) in followers.iter().enumerate() {
        if q == i || q == skip {
            continue;
        }
        let xq = other.position();
        let m = controller::potential_agent(&xi, &xq, formation.pair_thresholds[(i, q)], formation.varpi)?;
        if m != 0.0 {
            let d = &xi - &xq;
            acc += &d / d.norm() * m;
        }
    }
    Ok(acc)
}

/// A-posteriori bound envelope for pair `(i, j)` measured along a trace.
pub fn estimate_bounds(trace: &SimTrace, config: &SimConfig, i: usize, j: usize) -> Result<GainRuleInputs> {
    let barrier = Barrier::new(BarrierKind::Pair(i, j), config.formation.pair_thresholds[(i, j)])?;
    let field = DriftField {
        follower_models: &config.follower_models,
        leader_model: &config.leader_model,
        t: 0.0,
    };
    let gamma1 = &config.params.gamma1;
    let (mut w_bound, mut rest_bound, mut drift_bound, mut cross_bound) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let none = ObstacleSet::empty();
    for s in &trace.samples {
        let f = &s.followers;
        let ell = f[i].position() - f[j].position();
        let dist = ell.norm();
        if !(dist >= controller::SEPARATION_FLOOR) {
            return Err(Error::ZeroSeparation { distance: dist });
        }
        let n = ell / dist;
        let wi = crate::dynamics::disturbance(&config.disturbances[i], s.t, config.dim)?;
        let wj = crate::dynamics::disturbance(&config.disturbances[j], s.t, config.dim)?;
        w_bound = w_bound.max((wi - wj).norm());
        let ci = cross_repulsion(i, j, f, &config.formation)?;
        let cj = cross_repulsion(j, i, f, &config.formation)?;
        cross_bound = cross_bound.max((&ci - &cj).norm());
        let pair_i = gamma1 * (cross_repulsion(i, usize::MAX, f, &config.formation)?);
        let pair_j = gamma1 * (cross_repulsion(j, usize::MAX, f, &config.formation)?);
        let rest_i = &s.u[i] - pair_i;
        let rest_j = &s.u[j] - pair_j;
        rest_bound = rest_bound.max(n.dot(&(rest_i - rest_j)).abs());
        // 𝔇: derivative of the analytic second Lie derivative along the drift
        let field_t = DriftField { t: s.t, ..field };
        let l2 = |ff: &[AgentState], l: &AgentState| analytic_lie(&barrier, ff, l, &none).map(|v| v.1);
        let third = lie_drift_nested(&l2, &field_t, f, &s.leader, 1, 1e-5)?;
        drift_bound = drift_bound.max(third.abs());
    }
    Ok(GainRuleInputs {
        w_bound,
        rest_bound,
        drift_bound,
        cross_bound,
        psi: barrier.threshold,
        varpi: config.formation.varpi,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationRecord {
    pub kind: BarrierKind,
    pub threshold: f64,
    pub min_distance: f64,
    pub time: f64,
}

impl SeparationRecord {
    pub fn margin(&self) -> f64 {
        self.min_distance - self.threshold
    }

    pub fn safe(&self) -> bool {
        self.min_distance >= self.threshold
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyReport {
    pub records: Vec<SeparationRecord>,
    pub all_safe: bool,
    /// Record with the smallest margin, if any barrier exists.
    pub worst: Option<SeparationRecord>,
}

/// Minimum separation per barrier over the whole trace.
pub fn safety_monitor(trace: &SimTrace, formation: &FormationSpec, obstacles: &ObstacleSet) -> SafetyReport {
    let barriers = Barrier::all(formation, obstacles);
    let records: Vec<SeparationRecord> = barriers
        .par_iter()
        .map(|b| {
            let mut best = SeparationRecord {
                kind: b.kind,
                threshold: b.threshold,
                min_distance: f64::INFINITY,
                time: trace.samples.first().map_or(0.0, |s| s.t),
            };
            for s in &trace.samples {
                let d = b.distance(&s.followers, &s.leader, obstacles);
                if d < best.min_distance || d.is_nan() {
                    best.min_distance = d;
                    best.time = s.t;
                }
            }
            best
        })
        .collect();
    let all_safe = records.iter().all(SeparationRecord::safe);
    let worst = records.iter().min_by(|a, b| a.margin().total_cmp(&b.margin())).cloned();
    SafetyReport {
        records,
        all_safe,
        worst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DisturbanceModel;
    use crate::scenario;
    use crate::sim::TraceSample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn at(pos: &[f64], order: usize) -> AgentState {
        let mut x = AgentState::zeros(order, pos.len());
        x.set_block(0, &DVector::from_row_slice(pos));
        x
    }

    #[test]
    fn barrier_values() {
        let leader = at(&[0.0, 0.0], 3);
        let f = vec![at(&[0.0, 0.0], 3), at(&[3.0, 0.0], 3)];
        let obs = ObstacleSet {
            centers: vec![DVector::from_row_slice(&[0.0, 2.0])],
            outer_radius: 2.0,
            inner_radius: 0.5,
        };
        let pair = Barrier::new(BarrierKind::Pair(0, 1), 1.0).unwrap();
        assert_eq!(barrier_value(&pair, &f, &leader, &obs), 2.0);
        let pair3 = Barrier::new(BarrierKind::Pair(0, 1), 3.0).unwrap();
        assert_eq!(barrier_value(&pair3, &f, &leader, &obs), 0.0);
        let ob = Barrier::new(BarrierKind::Obstacle(0, 0), obs.outer_radius).unwrap();
        assert_eq!(barrier_value(&ob, &f, &leader, &obs), 0.0);
        assert!(Barrier::new(BarrierKind::Leader(0), 0.0).is_err());
    }

    #[test]
    fn projector_is_idempotent_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let v = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let n = &v / v.norm();
            let p = projector(&n);
            assert!((&p * &p - &p).abs().max() < 1e-14);
            assert!((&p - p.transpose()).abs().max() == 0.0);
            assert!((&p * &n).norm() < 1e-14);
        }
    }

    fn random_state(rng: &mut ChaCha8Rng) -> AgentState {
        AgentState::from_vec(3, 2, (0..6).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
    }

    #[test]
    fn relative_degree_structure_for_builtin_pairs() {
        let models: Vec<DynamicsModel> = (1..=5).map(|k| DynamicsModel::builtin_follower(k).unwrap()).collect();
        let field = DriftField {
            follower_models: &models,
            leader_model: &DynamicsModel::Leader,
            t: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let obs = ObstacleSet::empty();
        for trial in 0..40 {
            let mut f: Vec<AgentState> = (0..5).map(|_| random_state(&mut rng)).collect();
            let i = trial % 5;
            let j = (i + 1 + trial % 4) % 5;
            let mut shifted = f[j].block(0);
            shifted[0] += 2.0;
            f[j].set_block(0, &shifted);
            let leader = random_state(&mut rng);
            let b = Barrier::new(BarrierKind::Pair(i, j), 0.1).unwrap();
            if barrier_value(&b, &f, &leader, &obs) < 0.0 {
                continue;
            }
            let rep = lie_chain_check(&field, &b, &f, &leader, &obs).unwrap();
            assert!(rep.relative_degree_ok(1e-6, 1e-3), "{rep:?}");
            assert!(rep.input_terms[2] <= 1.0 + 1e-6);
            assert!(rep.first_rel_error() < 1e-6, "{rep:?}");
            assert!(rep.second_rel_error() < 1e-6, "{rep:?}");
        }
    }

    #[test]
    fn unsafe_state_is_rejected() {
        let models = vec![DynamicsModel::Agent2, DynamicsModel::Agent3];
        let field = DriftField {
            follower_models: &models,
            leader_model: &DynamicsModel::Leader,
            t: 0.0,
        };
        let f = vec![at(&[0.0, 0.0], 3), at(&[0.5, 0.0], 3)];
        let b = Barrier::new(BarrierKind::Pair(0, 1), 1.0).unwrap();
        let err = lie_chain_check(&field, &b, &f, &at(&[5.0, 5.0], 3), &ObstacleSet::empty());
        assert!(matches!(err, Err(Error::AdmissibilityViolation(_))));
    }

    fn inputs(w: f64, e: f64, d: f64, r: f64, psi: f64, varpi: f64) -> GainRuleInputs {
        GainRuleInputs {
            w_bound: w,
            rest_bound: e,
            drift_bound: d,
            cross_bound: r,
            psi,
            varpi,
        }
    }

    #[test]
    fn gain_rule_examples() {
        assert_eq!(gain_rule(&inputs(0.0, 0.0, 0.0, 0.0, 1.0, 1.0)).unwrap(), 0.0);
        assert_eq!(gain_rule(&inputs(1.0, 1.0, 2.0, 0.0, 1.0, 1.0)).unwrap(), 2.0);
        assert!(matches!(
            gain_rule(&inputs(1.0, 1.0, 2.0, 2.0, 1.0, 1.0)),
            Err(Error::RuleInapplicable(_))
        ));
    }

    proptest::proptest! {
        #[test]
        fn gain_rule_monotone(
            w in 0.0..5.0f64, e in 0.0..5.0f64, d in 0.0..5.0f64, r in 0.0..1.0f64,
            psi in 0.1..1.0f64, varpi in 1.0..3.0f64, bump in 0.01..1.0f64,
        ) {
            let base = gain_rule(&inputs(w, e, d, r, psi, varpi)).unwrap();
            for up in [
                inputs(w + bump, e, d, r, psi, varpi),
                inputs(w, e + bump, d, r, psi, varpi),
                inputs(w, e, d + bump, r, psi, varpi),
                inputs(w, e, d, r + bump * 0.1, psi, varpi),
                inputs(w, e, d, r, psi + bump * 0.1, varpi),
            ] {
                proptest::prop_assert!(gain_rule(&up).unwrap() >= base);
            }
            proptest::prop_assert!(gain_rule(&inputs(w, e, d, r, psi, varpi + bump)).unwrap() <= base);
        }
    }

    fn static_trace(config: &SimConfig, positions: &[[f64; 2]], times: &[f64]) -> SimTrace {
        let followers: Vec<AgentState> = positions.iter().map(|p| at(p, config.order)).collect();
        let zero = DVector::zeros(config.dim);
        let samples = times
            .iter()
            .map(|&t| TraceSample {
                t,
                topology_id: 0,
                followers: followers.clone(),
                leader: config.initial_leader.clone(),
                u: vec![zero.clone(); followers.len()],
                u_nominal: vec![zero.clone(); followers.len()],
                u_repulsive: vec![zero.clone(); followers.len()],
                w: vec![zero.clone(); followers.len()],
                e: vec![],
                r: vec![],
                delta1_norm: 0.0,
                v: Default::default(),
                v_pre_switch: None,
                z_norm: 0.0,
                min_pair_separation: 0.0,
                min_leader_separation: 0.0,
                min_obstacle_distance: 0.0,
                weight_norms: vec![],
            })
            .collect();
        SimTrace {
            n_agents: followers.len(),
            order: config.order,
            dim: config.dim,
            step: config.step,
            stride: 1,
            switch_times: vec![0.0],
            samples,
        }
    }

    #[test]
    fn bounds_of_a_stationary_pair() {
        let mut c = scenario::pair_config();
        c.disturbances = vec![DisturbanceModel::Zero, DisturbanceModel::Zero];
        let trace = static_trace(&c, &[[0.0, 0.0], [3.0, 0.0]], &[0.0, 0.5, 1.0]);
        let b = estimate_bounds(&trace, &c, 0, 1).unwrap();
        assert_eq!(b.w_bound, 0.0);
        assert_eq!(b.rest_bound, 0.0);
        assert_eq!(b.cross_bound, 0.0);
        assert!(b.drift_bound >= 0.0);
        // only the pair itself interacts, so the denominator is 2ϖ
        assert_eq!(2.0 * b.varpi - b.cross_bound * b.psi, 2.0 * b.varpi);
    }

    #[test]
    fn injected_disturbance_projection() {
        let mut c = scenario::pair_config();
        let a = 0.3;
        c.disturbances = vec![
            DisturbanceModel::UserDefined {
                exprs: vec![
                    crate::expr::Expr::parse("0.3*sin(t)").unwrap(),
                    crate::expr::Expr::parse("0").unwrap(),
                ],
                bound: a,
            },
            DisturbanceModel::Zero,
        ];
        let times: Vec<f64> = (0..=700).map(|k| k as f64 * 0.01).collect();
        let trace = static_trace(&c, &[[0.0, 0.0], [3.0, 0.0]], &times);
        let b = estimate_bounds(&trace, &c, 0, 1).unwrap();
        // n = e₁ and w₁ − w₂ = a sin t e₁, so the projection bound is a
        assert!((b.w_bound - a).abs() <= 0.05 * a, "{}", b.w_bound);
    }

    #[test]
    fn monitor_verdicts() {
        let mut c = scenario::single_agent_config();
        c.horizon = 0.01;
        let trace = crate::sim::simulate(&c).unwrap();
        let mut f = c.formation.clone();
        f.leader_thresholds[0] = 1e-6;
        let rep = safety_monitor(&trace, &f, &ObstacleSet::empty());
        assert!(rep.all_safe);

        let c = scenario::pair_config();
        let psi = c.formation.pair_thresholds[(0, 1)];
        let trace = static_trace(&c, &[[0.0, 0.0], [0.5 * psi, 0.0]], &[0.0]);
        let rep = safety_monitor(&trace, &c.formation, &c.obstacles);
        assert!(!rep.all_safe);
        let worst = rep.worst.unwrap();
        assert_eq!(worst.kind, BarrierKind::Pair(0, 1));
        assert_eq!(worst.time, 0.0);
    }
}
