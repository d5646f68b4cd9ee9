//! Fixed-step RK4 integration of the closed loop with topology switching.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{self, HurwitzDesign, VBreakdown, VSnapshot};
use crate::controller::{self, ControlContext, ControlParams, FormationSpec, ObstacleSet};
use crate::dynamics::{self, AgentState, DisturbanceModel, DynamicsModel};
use crate::error::{Error, Result};
use crate::graph::{self, GraphLyapunov, SwitchingSchedule, Topology};
use crate::nn::{self, BasisSet, NNBank, TuningGain};
use crate::report::AnalysisSettings;

/// Gains of the three estimators of one follower.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentGains {
    pub state: TuningGain,
    pub leader: TuningGain,
    pub disturbance: TuningGain,
}

/// Ideal weights `(θᵢ, θᵢ₀, θᵢw)` of one follower.
pub type IdealWeights = [DMatrix<f64>; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub horizon: f64,
    pub step: f64,
    /// Record every `stride`-th grid point (switch instants are always kept).
    pub stride: usize,
    pub seed: u64,
    /// Half-width of a uniform perturbation added to initial follower positions.
    pub initial_jitter: f64,
    pub order: usize,
    pub dim: usize,
    pub topologies: Vec<Topology>,
    pub schedule: SwitchingSchedule,
    pub formation: FormationSpec,
    pub obstacles: ObstacleSet,
    pub params: ControlParams,
    pub design: HurwitzDesign,
    pub bases: BasisSet,
    pub gains: Vec<AgentGains>,
    pub follower_models: Vec<DynamicsModel>,
    pub leader_model: DynamicsModel,
    pub disturbances: Vec<DisturbanceModel>,
    pub initial_followers: Vec<AgentState>,
    pub initial_leader: AgentState,
    /// Known ideal weights; `None` evaluates `V` with zero ideal weights.
    pub ideal_weights: Option<Vec<IdealWeights>>,
    pub analysis: AnalysisSettings,
}

impl SimConfig {
    pub fn n_agents(&self) -> usize {
        self.initial_followers.len()
    }

    pub fn start(&self) -> f64 {
        self.schedule.start()
    }

    /// Number of integration steps.
    pub fn n_steps(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }

    pub fn time_at(&self, k: usize) -> f64 {
        self.start() + k as f64 * self.step
    }

    /// Grid index of a switch time, if it lies on the grid.
    fn grid_index(&self, t: f64) -> Option<usize> {
        let x = (t - self.start()) / self.step;
        let k = x.round();
        ((x - k).abs() < 1e-9 && k >= 0.0).then_some(k as usize)
    }

    /// Initial follower states after the seeded jitter.
    pub fn initial_states(&self) -> Vec<AgentState> {
        if self.initial_jitter == 0.0 {
            return self.initial_followers.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.initial_followers
            .iter()
            .map(|x| {
                let mut y = x.clone();
                for d in 0..self.dim {
                    y.as_mut_slice()[d] += rng.random_range(-self.initial_jitter..=self.initial_jitter);
                }
                y
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        fn v(invariant: &str, detail: impl Into<String>) -> Error {
            Error::validation(invariant, detail)
        }
        if !(self.step > 0.0 && self.step <= 0.01) {
            return Err(v("step size", format!("h = {} must satisfy 0 < h <= 0.01", self.step)));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(v("horizon", format!("horizon = {} must be positive", self.horizon)));
        }
        if (self.horizon / self.step - (self.horizon / self.step).round()).abs() > 1e-9 {
            return Err(v("horizon", "horizon must be a whole number of steps"));
        }
        if self.stride == 0 {
            return Err(v("stride", "stride must be >= 1"));
        }
        if self.order < 2 || self.dim == 0 {
            return Err(v("system size", "need order >= 2 and dimension >= 1"));
        }
        let n_agents = self.n_agents();
        if n_agents == 0 {
            return Err(v("agents", "at least one follower is required"));
        }
        for (name, len) in [
            ("follower models", self.follower_models.len()),
            ("disturbances", self.disturbances.len()),
            ("gains", self.gains.len()),
            ("formation offsets", self.formation.offsets.len()),
        ] {
            if len != n_agents {
                return Err(v(name, format!("{len} entries for {n_agents} followers")));
            }
        }
        if let Some(w) = &self.ideal_weights {
            if w.len() != n_agents {
                return Err(v("ideal weights", "one set per follower is required"));
            }
        }
        for x in self.initial_followers.iter().chain([&self.initial_leader]) {
            if x.order() != self.order || x.dim() != self.dim {
                return Err(Error::dims("initial state shape differs from (order, dim)"));
            }
        }
        for (i, m) in self.follower_models.iter().enumerate() {
            m.check_dims(self.order, self.dim)
                .map_err(|e| v("follower model", format!("agent {}: {e}", i + 1)))?;
        }
        self.leader_model
            .check_dims(self.order, self.dim)
            .map_err(|e| v("leader model", e.to_string()))?;
        for (i, d) in self.disturbances.iter().enumerate() {
            if let DisturbanceModel::UserDefined { exprs, .. } = d {
                if exprs.len() != self.dim {
                    return Err(v(
                        "disturbance",
                        format!("agent {}: need {} expressions", i + 1, self.dim),
                    ));
                }
                for e in exprs {
                    e.check_dims(0, 0)
                        .map_err(|_| v("disturbance", format!("`{e}` may only depend on t")))?;
                }
            }
            if !(d.bound() >= 0.0) {
                return Err(v("disturbance", "bound must be >= 0"));
            }
        }
        self.formation.validate()?;
        self.obstacles.validate()?;
        self.params.validate(n_agents, self.order, self.dim)?;
        if !analysis::is_hurwitz(&self.params.lambda_bar) {
            return Err(v("hurwitz", "the lambda polynomial is not Hurwitz"));
        }
        if self.design.lambda_bar != self.params.lambda_bar {
            return Err(v("hurwitz", "design and control lambda differ"));
        }
        let probe = AgentState::zeros(self.order, self.dim);
        for (name, b) in [
            ("state basis", &self.bases.state),
            ("leader basis", &self.bases.leader),
            ("disturbance basis", &self.bases.disturbance),
        ] {
            b.eval(&probe, 0.0).map_err(|e| v(name, e.to_string()))?;
        }
        let q = [
            self.bases.state.dimension(),
            self.bases.leader.dimension(),
            self.bases.disturbance.dimension(),
        ];
        for g in &self.gains {
            for (tg, qq) in [&g.state, &g.leader, &g.disturbance].iter().zip(q) {
                TuningGain::new(tg.gain.clone(), tg.kappa)?;
                if tg.gain.nrows() != qq {
                    return Err(v(
                        "adaptation gain",
                        format!("gain is {}x{0}, basis has {qq}", tg.gain.nrows()),
                    ));
                }
            }
        }
        for (id, t) in self.topologies.iter().enumerate() {
            if t.n_agents() != n_agents {
                return Err(v("topology", format!("topology {id} has {} nodes", t.n_agents())));
            }
            if !graph::check_leader_rooted(t) {
                return Err(v(
                    "leader rooted",
                    format!("topology {id} has no spanning tree rooted at the leader"),
                ));
            }
            graph::graph_weights(t, self.params.nu1, self.params.nu2)?;
        }
        if self
            .schedule
            .topology_ids()
            .iter()
            .any(|&id| id >= self.topologies.len())
        {
            return Err(v("schedule", "topology id out of range"));
        }
        for &ts in self.schedule.switch_times() {
            if self.grid_index(ts).is_none() {
                return Err(v(
                    "switch alignment",
                    format!("switch time {ts} is not a multiple of h = {}", self.step),
                ));
            }
        }
        self.check_initial_separation(&self.initial_states())
    }

    fn check_initial_separation(&self, followers: &[AgentState]) -> Result<()> {
        let f = &self.formation;
        let x0 = self.initial_leader.position();
        for i in 0..followers.len() {
            let xi = followers[i].position();
            for j in i + 1..followers.len() {
                let d = (&xi - followers[j].position()).norm();
                if !(d > f.pair_thresholds[(i, j)]) {
                    return Err(Error::validation(
                        "initial separation",
                        format!(
                            "agents {} and {} start {d:.4} apart (threshold {})",
                            i + 1,
                            j + 1,
                            f.pair_thresholds[(i, j)]
                        ),
                    ));
                }
            }
            let d = (&xi - &x0).norm();
            if !(d > f.leader_thresholds[i]) {
                return Err(Error::validation(
                    "initial separation",
                    format!("agent {} starts {d:.4} from the leader", i + 1),
                ));
            }
            for (c, o) in self.obstacles.centers.iter().enumerate() {
                let d = (&xi - o).norm();
                if !(d > self.obstacles.outer_radius) {
                    return Err(Error::validation(
                        "initial separation",
                        format!("agent {} starts inside obstacle {} (distance {d:.4})", i + 1, c + 1),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Full closed-loop state at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub followers: Vec<AgentState>,
    pub leader: AgentState,
    pub banks: Vec<NNBank>,
}

impl SimState {
    pub fn initial(config: &SimConfig) -> Self {
        let banks = config
            .gains
            .iter()
            .map(|g| NNBank::new(config.dim, g.state.clone(), g.leader.clone(), g.disturbance.clone()))
            .collect();
        Self {
            followers: config.initial_states(),
            leader: config.initial_leader.clone(),
            banks,
        }
    }

    /// Flattens states and weights into one vector.
    pub fn pack(&self) -> DVector<f64> {
        let mut out = Vec::new();
        for x in &self.followers {
            out.extend_from_slice(x.as_slice());
        }
        out.extend_from_slice(self.leader.as_slice());
        for b in &self.banks {
            out.extend_from_slice(b.theta_hat.as_slice());
            out.extend_from_slice(b.theta0_hat.as_slice());
            out.extend_from_slice(b.thetaw_hat.as_slice());
        }
        DVector::from_vec(out)
    }

    /// Inverse of [`pack`](Self::pack), reusing `self` for shapes and gains.
    pub fn unpack(&self, y: &DVector<f64>) -> Self {
        let s = y.as_slice();
        let mut at = 0;
        let mut take = |len: usize| {
            let slice = &s[at..at + len];
            at += len;
            slice
        };
        let followers = self
            .followers
            .iter()
            .map(|x| AgentState::from_slice_unchecked(x.order(), x.dim(), take(x.as_slice().len())))
            .collect();
        let l = &self.leader;
        let leader = AgentState::from_slice_unchecked(l.order(), l.dim(), take(l.as_slice().len()));
        let banks = self
            .banks
            .iter()
            .map(|b| {
                let mut nb = b.clone();
                for m in [&mut nb.theta_hat, &mut nb.theta0_hat, &mut nb.thetaw_hat] {
                    let len = m.len();
                    m.as_mut_slice().copy_from_slice(take(len));
                }
                nb
            })
            .collect();
        Self {
            followers,
            leader,
            banks,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.followers.iter().all(AgentState::is_finite)
            && self.leader.is_finite()
            && self.banks.iter().all(NNBank::is_finite)
    }
}

/// Classical fourth-order Runge-Kutta step.
pub fn rk4_step<F>(mut f: F, t: f64, y: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = f(t, y)?;
    let k2 = f(t + h / 2.0, &(y + &k1 * (h / 2.0)))?;
    let k3 = f(t + h / 2.0, &(y + &k2 * (h / 2.0)))?;
    let k4 = f(t + h, &(y + &k3 * h))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Topology-dependent data held fixed between switches.
#[derive(Debug, Clone)]
pub struct ActiveGraph<'a> {
    pub id: usize,
    pub topology: &'a Topology,
    pub lyapunov: GraphLyapunov,
}

impl<'a> ActiveGraph<'a> {
    pub fn new(config: &'a SimConfig, id: usize) -> Result<Self> {
        let topology = &config.topologies[id];
        let lyapunov = graph::graph_weights(topology, config.params.nu1, config.params.nu2)?;
        Ok(Self { id, topology, lyapunov })
    }
}

fn context<'a>(config: &'a SimConfig, graph: &ActiveGraph<'a>) -> ControlContext<'a> {
    ControlContext {
        topology: graph.topology,
        params: &config.params,
        formation: &config.formation,
        obstacles: &config.obstacles,
        bases: &config.bases,
    }
}

/// Time derivative of the packed closed-loop state.
pub fn closed_loop_rhs(config: &SimConfig, graph: &ActiveGraph<'_>, t: f64, state: &SimState) -> Result<SimState> {
    let ctx = context(config, graph);
    let p = config.dim;
    let mut followers = Vec::with_capacity(state.followers.len());
    let mut banks = Vec::with_capacity(state.banks.len());
    for (i, bank) in state.banks.iter().enumerate() {
        let terms = controller::control_terms(i, t, &state.followers, &state.leader, &ctx, bank)?;
        let u = terms.total();
        let w = dynamics::disturbance(&config.disturbances[i], t, p)?;
        followers.push(dynamics::follower_derivative(
            &config.follower_models[i],
            &state.followers[i],
            &u,
            &w,
            t,
        )?);
        let phi = config.bases.state.eval(&state.followers[i], t)?;
        let phi0 = config.bases.leader.eval(&state.leader, t)?;
        let phiw = config.bases.disturbance.eval(&state.followers[i], t)?;
        let rates = nn::tuning_derivatives(
            bank,
            &phi,
            &phi0,
            &phiw,
            &terms.sync,
            graph.lyapunov.p_i(i),
            graph.topology.degree_sum(i),
        )?;
        let mut d = bank.clone();
        d.theta_hat = rates.theta;
        d.theta0_hat = rates.theta0;
        d.thetaw_hat = rates.thetaw;
        banks.push(d);
    }
    let leader = dynamics::leader_derivative(&config.leader_model, &state.leader, t)?;
    Ok(SimState {
        followers,
        leader,
        banks,
    })
}

/// One RK4 step with the topology frozen.
pub fn step(config: &SimConfig, graph: &ActiveGraph<'_>, t: f64, h: f64, state: &SimState) -> Result<SimState> {
    let y = state.pack();
    let next = rk4_step(
        |tt, yy| closed_loop_rhs(config, graph, tt, &state.unpack(yy)).map(|d| d.pack()),
        t,
        &y,
        h,
    )?;
    let out = state.unpack(&next);
    if !out.is_finite() {
        return Err(Error::NonFiniteState {
            t: t + h,
            what: "state or weights became non-finite".into(),
        });
    }
    Ok(out)
}

/// Everything recorded at one sample instant.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub topology_id: usize,
    pub followers: Vec<AgentState>,
    pub leader: AgentState,
    pub u: Vec<DVector<f64>>,
    pub u_nominal: Vec<DVector<f64>>,
    pub u_repulsive: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
    /// `e[i][k]` for follower `i` and order `k`.
    pub e: Vec<Vec<DVector<f64>>>,
    pub r: Vec<DVector<f64>>,
    /// `‖δ¹‖` of the stacked leader-relative position error.
    pub delta1_norm: f64,
    pub v: VBreakdown,
    /// `V` under the previous topology at a switch instant.
    pub v_pre_switch: Option<VBreakdown>,
    /// `‖z‖` with `z = [‖E₁‖, ‖θ̃‖, ‖θ̃_w‖, ‖θ̃₀‖, ‖r‖]`.
    pub z_norm: f64,
    pub min_pair_separation: f64,
    pub min_leader_separation: f64,
    pub min_obstacle_distance: f64,
    /// `[‖θ̂ᵢ‖, ‖θ̂ᵢ₀‖, ‖θ̂ᵢw‖]` per follower.
    pub weight_norms: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub n_agents: usize,
    pub order: usize,
    pub dim: usize,
    pub step: f64,
    pub stride: usize,
    pub switch_times: Vec<f64>,
    pub samples: Vec<TraceSample>,
}

impl SimTrace {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &TraceSample {
        self.samples.last().expect("trace is never empty")
    }
}

/// Minimum pairwise, leader and obstacle distances at one instant.
pub fn separations(followers: &[AgentState], leader: &AgentState, obstacles: &ObstacleSet) -> (f64, f64, f64) {
    let mut pair = f64::INFINITY;
    let mut lead = f64::INFINITY;
    let mut obs = f64::INFINITY;
    let x0 = leader.position();
    for (i, a) in followers.iter().enumerate() {
        let xi = a.position();
        for b in &followers[i + 1..] {
            pair = pair.min((&xi - b.position()).norm());
        }
        lead = lead.min((&xi - &x0).norm());
        for c in &obstacles.centers {
            obs = obs.min((&xi - c).norm());
        }
    }
    (pair, lead, obs)
}

fn weight_errors(config: &SimConfig, state: &SimState) -> Vec<IdealWeights> {
    state
        .banks
        .iter()
        .enumerate()
        .map(|(i, b)| match &config.ideal_weights {
            Some(ideal) => [
                &ideal[i][0] - &b.theta_hat,
                &ideal[i][1] - &b.theta0_hat,
                &ideal[i][2] - &b.thetaw_hat,
            ],
            None => [-b.theta_hat.clone(), -b.theta0_hat.clone(), -b.thetaw_hat.clone()],
        })
        .collect()
}

/// Composite `V` and `‖z‖` of a state under one topology.
pub fn lyapunov_of(config: &SimConfig, graph: &ActiveGraph<'_>, state: &SimState) -> Result<(VBreakdown, f64)> {
    let (n, p, na) = (config.order, config.dim, config.n_agents());
    let mut r = DVector::zeros(na * p);
    let mut e1 = DMatrix::zeros(na * p, n - 1);
    for i in 0..na {
        let errors = (0..n)
            .map(|k| {
                controller::sync_error(
                    i,
                    k,
                    &state.followers,
                    &state.leader,
                    graph.topology,
                    &config.params,
                    &config.formation,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let (ri, _) = controller::combine_errors(&errors, &config.params.lambda_bar);
        r.rows_mut(i * p, p).copy_from(&ri);
        for k in 0..n - 1 {
            e1.view_mut((i * p, k), (p, 1)).copy_from(&errors[k]);
        }
    }
    let errs = weight_errors(config, state);
    let gains: Vec<[&DMatrix<f64>; 3]> = state
        .banks
        .iter()
        .map(|b| [&b.state_gain.gain, &b.leader_gain.gain, &b.disturbance_gain.gain])
        .collect();
    let snap = VSnapshot {
        r: &r,
        e1: &e1,
        weight_errors: &errs,
        gains: &gains,
    };
    let v = analysis::composite_v(&snap, &graph.lyapunov, &config.design.p1);
    let norm_of = |c: usize| errs.iter().map(|e| e[c].norm_squared()).sum::<f64>();
    let z = [e1.norm_squared(), norm_of(0), norm_of(2), norm_of(1), r.norm_squared()];
    Ok((v, z.iter().sum::<f64>().sqrt()))
}

/// Evaluates every observable of a sample.
pub fn observe(config: &SimConfig, graph: &ActiveGraph<'_>, t: f64, state: &SimState) -> Result<TraceSample> {
    let ctx = context(config, graph);
    let (n, p, na) = (config.order, config.dim, config.n_agents());
    let mut sample = TraceSample {
        t,
        topology_id: graph.id,
        followers: state.followers.clone(),
        leader: state.leader.clone(),
        u: Vec::with_capacity(na),
        u_nominal: Vec::with_capacity(na),
        u_repulsive: Vec::with_capacity(na),
        w: Vec::with_capacity(na),
        e: Vec::with_capacity(na),
        r: Vec::with_capacity(na),
        delta1_norm: 0.0,
        v: VBreakdown::default(),
        v_pre_switch: None,
        z_norm: 0.0,
        min_pair_separation: 0.0,
        min_leader_separation: 0.0,
        min_obstacle_distance: 0.0,
        weight_norms: state.banks.iter().map(NNBank::weight_norms).collect(),
    };
    let mut delta_sq = 0.0;
    for i in 0..na {
        let terms = controller::control_terms(i, t, &state.followers, &state.leader, &ctx, &state.banks[i])?;
        sample.u.push(terms.total());
        sample.u_nominal.push(terms.nominal());
        sample.u_repulsive.push(terms.repulsive());
        sample.r.push(terms.sync.clone());
        sample.w.push(dynamics::disturbance(&config.disturbances[i], t, p)?);
        sample.e.push(
            (0..n)
                .map(|k| {
                    controller::sync_error(
                        i,
                        k,
                        &state.followers,
                        &state.leader,
                        graph.topology,
                        &config.params,
                        &config.formation,
                    )
                })
                .collect::<Result<Vec<_>>>()?,
        );
        delta_sq += controller::tracking_error(i, 0, &state.followers, &state.leader, &config.formation).norm_squared();
    }
    sample.delta1_norm = delta_sq.sqrt();
    let (v, z) = lyapunov_of(config, graph, state)?;
    sample.v = v;
    sample.z_norm = z;
    let (a, b, c) = separations(&state.followers, &state.leader, &config.obstacles);
    sample.min_pair_separation = a;
    sample.min_leader_separation = b;
    sample.min_obstacle_distance = c;
    Ok(sample)
}

/// Runs the configured scenario over its horizon.
pub fn simulate(config: &SimConfig) -> Result<SimTrace> {
    simulate_observed(config, |_, _| Ok(()))
}

/// [`simulate`], calling `on_sample` with the full state at every recorded instant.
pub fn simulate_observed<F>(config: &SimConfig, mut on_sample: F) -> Result<SimTrace>
where
    F: FnMut(f64, &SimState) -> Result<()>,
{
    config.validate()?;
    let mut state = SimState::initial(config);
    let n_steps = config.n_steps();
    let switch_steps: Vec<usize> = config
        .schedule
        .switch_times()
        .iter()
        .skip(1)
        .filter_map(|&t| config.grid_index(t))
        .collect();
    let mut graphs: Vec<Option<ActiveGraph<'_>>> = vec![None; config.topologies.len()];
    let mut graph_for = |id: usize| -> Result<ActiveGraph<'_>> {
        if graphs[id].is_none() {
            graphs[id] = Some(ActiveGraph::new(config, id)?);
        }
        Ok(graphs[id].clone().expect("just filled"))
    };
    let mut samples = Vec::with_capacity(n_steps / config.stride + switch_steps.len() + 2);
    let mut prev_id = config.schedule.active_index(config.time_at(0)).0;
    for k in 0..=n_steps {
        let t = config.time_at(k);
        let (id, _) = config.schedule.active_index(t);
        let graph = graph_for(id)?;
        let is_switch = switch_steps.binary_search(&k).is_ok();
        if k % config.stride == 0 || k == n_steps || is_switch {
            let mut sample = observe(config, &graph, t, &state)?;
            if is_switch {
                let old = graph_for(prev_id)?;
                sample.v_pre_switch = Some(lyapunov_of(config, &old, &state)?.0);
            }
            samples.push(sample);
            on_sample(t, &state)?;
        }
        prev_id = id;
        if k == n_steps {
            break;
        }
        state = step(config, &graph, t, config.step, &state)?;
    }
    Ok(SimTrace {
        n_agents: config.n_agents(),
        order: config.order,
        dim: config.dim,
        step: config.step,
        stride: config.stride,
        switch_times: config.schedule.switch_times().to_vec(),
        samples,
    })
}

/// Summary statistics of a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub max_u: f64,
    pub delta1_initial: f64,
    pub delta1_final: f64,
    /// Max of `‖δ¹‖` over the last 20% of the horizon.
    pub ultimate_bound: f64,
    /// First time after which `‖δ¹‖` stays within the ultimate bound.
    pub settling_time: f64,
    pub min_pair_separation: f64,
    pub min_leader_separation: f64,
    pub min_obstacle_distance: f64,
    /// `(t_s, V(t_s) / V(t_s−))` at each recorded switch.
    pub jump_ratios: Vec<(f64, f64)>,
}

pub fn metrics(trace: &SimTrace) -> Metrics {
    let s = &trace.samples;
    let t0 = s[0].t;
    let t_end = trace.last().t;
    let tail_start = t_end - 0.2 * (t_end - t0);
    let ultimate_bound = s
        .iter()
        .filter(|x| x.t >= tail_start)
        .map(|x| x.delta1_norm)
        .fold(0.0, f64::max);
    let settling_time = s
        .iter()
        .rposition(|x| x.delta1_norm > ultimate_bound)
        .map_or(t0, |idx| s[(idx + 1).min(s.len() - 1)].t);
    let max_u = s.iter().flat_map(|x| x.u.iter().map(|u| u.norm())).fold(0.0, f64::max);
    let fold_min = |f: fn(&TraceSample) -> f64| s.iter().map(f).fold(f64::INFINITY, f64::min);
    let jump_ratios = s
        .iter()
        .filter_map(|x| {
            x.v_pre_switch.map(|pre| {
                let ratio = if pre.total() > 0.0 {
                    x.v.total() / pre.total()
                } else if x.v.total() == 0.0 {
                    1.0
                } else {
                    f64::INFINITY
                };
                (x.t, ratio)
            })
        })
        .collect();
    Metrics {
        max_u,
        delta1_initial: s[0].delta1_norm,
        delta1_final: trace.last().delta1_norm,
        ultimate_bound,
        settling_time,
        min_pair_separation: fold_min(|x| x.min_pair_separation),
        min_leader_separation: fold_min(|x| x.min_leader_separation),
        min_obstacle_distance: fold_min(|x| x.min_obstacle_distance),
        jump_ratios,
    }
}

fn least_squares(rows: &[DVector<f64>], targets: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let q = rows[0].len();
    let p = targets[0].len();
    let mut a = DMatrix::zeros(rows.len(), q);
    let mut b = DMatrix::zeros(rows.len(), p);
    for (k, (row, target)) in rows.iter().zip(targets).enumerate() {
        a.row_mut(k).copy_from(&row.transpose());
        b.row_mut(k).copy_from(&target.transpose());
    }
    a.svd(true, true).solve(&b, 1e-10).map_err(|e| Error::NonFiniteState {
        t: 0.0,
        what: format!("least-squares weight fit failed: {e}"),
    })
}

/// Least-squares ideal weights of each follower's drift, the leader drift
/// and each disturbance over the sampled trajectory.
pub fn fit_ideal_weights(config: &SimConfig, trace: &SimTrace) -> Result<Vec<IdealWeights>> {
    let samples = &trace.samples;
    let mut phi0 = Vec::with_capacity(samples.len());
    let mut f0 = Vec::with_capacity(samples.len());
    for s in samples {
        phi0.push(config.bases.leader.eval(&s.leader, s.t)?);
        f0.push(config.leader_model.drift(&s.leader, s.t)?);
    }
    let theta0 = least_squares(&phi0, &f0)?;
    (0..config.n_agents())
        .map(|i| {
            let mut phi = Vec::with_capacity(samples.len());
            let mut f = Vec::with_capacity(samples.len());
            let mut phiw = Vec::with_capacity(samples.len());
            let mut w = Vec::with_capacity(samples.len());
            for s in samples {
                phi.push(config.bases.state.eval(&s.followers[i], s.t)?);
                f.push(config.follower_models[i].drift(&s.followers[i], s.t)?);
                phiw.push(config.bases.disturbance.eval(&s.followers[i], s.t)?);
                w.push(s.w[i].clone());
            }
            Ok([least_squares(&phi, &f)?, theta0.clone(), least_squares(&phiw, &w)?])
        })
        .collect()
}

/// `ρ − (ν₁L + ν₂B)⊗I (f(x) + u + w − 1⊗f₀)` at a sample, stacked over followers.
pub fn r_dot_formula(config: &SimConfig, sample: &TraceSample) -> Result<DVector<f64>> {
    let (p, na) = (config.dim, config.n_agents());
    let topology = &config.topologies[sample.topology_id];
    let coupling = graph::coupling_matrix(topology, config.params.nu1, config.params.nu2)?;
    let f0 = config.leader_model.drift(&sample.leader, sample.t)?;
    let mut inner = DVector::zeros(na * p);
    let mut rho = DVector::zeros(na * p);
    for i in 0..na {
        let f = config.follower_models[i].drift(&sample.followers[i], sample.t)?;
        let u = sample.u[i].component_mul(&config.follower_models[i].input_mask(p));
        inner.rows_mut(i * p, p).copy_from(&(f + u + &sample.w[i] - &f0));
        let (_, rho_i) = controller::combine_errors(&sample.e[i], &config.params.lambda_bar);
        rho.rows_mut(i * p, p).copy_from(&rho_i);
    }
    Ok(rho - crate::linalg::kron_identity_apply(&coupling, p, &inner))
}
