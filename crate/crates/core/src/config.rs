//! TOML scenario files: parsing with located diagnostics, validation and
//! lossless serialization back to text.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::controller::{ControlParams, FormationSpec, ObstacleSet};
use crate::dynamics::{AgentState, DisturbanceModel, DynamicsModel, SineTerm};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::graph::{SwitchingSchedule, Topology};
use crate::nn::{BasisSet, BasisSpec, TuningGain};
use crate::report::AnalysisSettings;
use crate::scenario;
use crate::sim::{AgentGains, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrMatrix {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl ScalarOrMatrix {
    fn to_matrix(&self, size: usize, what: &str) -> Result<DMatrix<f64>> {
        match self {
            Self::Scalar(v) => Ok(DMatrix::identity(size, size) * *v),
            Self::Matrix(rows) => matrix_from_rows(rows, size, size, what),
        }
    }

    fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self::Matrix(rows_of(m))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrVector {
    Scalar(f64),
    Vector(Vec<f64>),
}

/// A builtin name or one expression per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NamedOrExprs {
    Named(String),
    Exprs(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DisturbanceSpec {
    Named(String),
    Sines {
        /// `[amplitude, frequency, phase]` triples, applied to every axis.
        sines: Vec<[f64; 3]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bound: Option<f64>,
    },
    Exprs {
        expressions: Vec<String>,
        bound: f64,
    },
}

impl Default for DisturbanceSpec {
    fn default() -> Self {
        Self::Named("default".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "d_horizon")]
    pub horizon: f64,
    #[serde(default = "d_step")]
    pub step: f64,
    #[serde(default = "d_one_usize")]
    pub stride: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub initial_jitter: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            horizon: d_horizon(),
            step: d_step(),
            stride: 1,
            seed: 0,
            initial_jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(default = "d_order")]
    pub order: usize,
    #[serde(default = "d_dim")]
    pub dim: usize,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            order: d_order(),
            dim: d_dim(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    #[serde(default = "d_one")]
    pub nu1: f64,
    #[serde(default = "d_one")]
    pub nu2: f64,
    /// Positive real poles; `λ̄` comes from `Π(s + ξ)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poles: Option<Vec<f64>>,
    /// Explicit `λ₁ … λ_{n−1}`, used when `poles` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(default = "d_one")]
    pub beta: f64,
    /// Leader-tracking gain applied to every follower and order.
    #[serde(default = "d_c")]
    pub c: f64,
    #[serde(default = "d_rep")]
    pub gamma0: ScalarOrMatrix,
    #[serde(default = "d_rep")]
    pub gamma1: ScalarOrMatrix,
    #[serde(default = "d_rep")]
    pub gamma2: ScalarOrMatrix,
}

impl Default for ControlSection {
    fn default() -> Self {
        Self {
            nu1: 1.0,
            nu2: 1.0,
            poles: None,
            lambda: None,
            beta: 1.0,
            c: d_c(),
            gamma0: d_rep(),
            gamma1: d_rep(),
            gamma2: d_rep(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSpec {
    #[serde(default = "d_nn_gain")]
    pub gain: ScalarOrMatrix,
    #[serde(default = "d_kappa")]
    pub kappa: f64,
}

impl Default for GainSpec {
    fn default() -> Self {
        Self {
            gain: d_nn_gain(),
            kappa: d_kappa(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptationSection {
    #[serde(default = "d_state_basis")]
    pub state_basis: NamedOrExprs,
    #[serde(default = "d_leader_basis")]
    pub leader_basis: NamedOrExprs,
    #[serde(default = "d_dist_basis")]
    pub disturbance_basis: NamedOrExprs,
    #[serde(default)]
    pub state: GainSpec,
    #[serde(default)]
    pub leader: GainSpec,
    #[serde(default)]
    pub disturbance: GainSpec,
}

impl Default for AdaptationSection {
    fn default() -> Self {
        Self {
            state_basis: d_state_basis(),
            leader_basis: d_leader_basis(),
            disturbance_basis: d_dist_basis(),
            state: GainSpec::default(),
            leader: GainSpec::default(),
            disturbance: GainSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationSection {
    #[serde(default = "d_one")]
    pub varpi: f64,
    #[serde(default = "d_psi")]
    pub pair_threshold: ScalarOrMatrix,
    #[serde(default = "d_psi_vec")]
    pub leader_threshold: ScalarOrVector,
    /// Leader offset blocks; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leader_offset: Option<Vec<Vec<f64>>>,
}

impl Default for FormationSection {
    fn default() -> Self {
        Self {
            varpi: 1.0,
            pair_threshold: d_psi(),
            leader_threshold: d_psi_vec(),
            leader_offset: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSection {
    #[serde(default = "d_one")]
    pub outer_radius: f64,
    #[serde(default = "d_half")]
    pub inner_radius: f64,
    #[serde(default)]
    pub centers: Vec<Vec<f64>>,
}

impl Default for ObstacleSection {
    fn default() -> Self {
        Self {
            outer_radius: 1.0,
            inner_radius: 0.5,
            centers: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderSection {
    #[serde(default = "d_leader_model")]
    pub model: NamedOrExprs,
    /// State blocks `[x¹, x², …]`; missing trailing blocks are zero.
    #[serde(default)]
    pub initial: Vec<Vec<f64>>,
}

impl Default for LeaderSection {
    fn default() -> Self {
        Self {
            model: d_leader_model(),
            initial: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    pub model: NamedOrExprs,
    #[serde(default = "d_true")]
    pub apply_u1: bool,
    #[serde(default)]
    pub offset: Vec<Vec<f64>>,
    pub initial: Vec<Vec<f64>>,
    #[serde(default)]
    pub disturbance: DisturbanceSpec,
    /// Full `p × n·p` leader-tracking gain; overrides `control.c`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_gain: Option<GainSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leader_gain: Option<GainSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance_gain: Option<GainSpec>,
}

/// Agents are 1-based in files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// `[agent, weight]` leader links.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub leader: Vec<(usize, f64)>,
    /// `[from, to, weight]`: `to` listens to `from`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub directed: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undirected: Vec<(usize, usize, f64)>,
    /// Full adjacency, alternative to the edge lists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leader_weights: Option<Vec<f64>>,
}

/// Topologies are 1-based in files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(default)]
    pub start: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle: Option<Vec<usize>>,
    /// Explicit switch times (first = start), alternative to `period`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topologies: Option<Vec<usize>>,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            start: 0.0,
            period: Some(scenario::SWITCH_PERIOD),
            cycle: None,
            times: None,
            topologies: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default)]
    pub residual_bound: f64,
    #[serde(default = "d_one")]
    pub iota_gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_bounds: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_bounds: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_e0: Option<f64>,
}

impl Default for AnalysisSection {
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

/// On-disk scenario layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub control: ControlSection,
    #[serde(default)]
    pub adaptation: AdaptationSection,
    #[serde(default)]
    pub formation: FormationSection,
    #[serde(default)]
    pub obstacles: ObstacleSection,
    #[serde(default)]
    pub leader: LeaderSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(rename = "agent")]
    pub agents: Vec<AgentSection>,
    #[serde(rename = "topology")]
    pub topologies: Vec<TopologySection>,
}

fn d_horizon() -> f64 {
    40.0
}
fn d_step() -> f64 {
    0.001
}
fn d_one_usize() -> usize {
    1
}
fn d_order() -> usize {
    3
}
fn d_dim() -> usize {
    2
}
fn d_one() -> f64 {
    1.0
}
fn d_half() -> f64 {
    0.5
}
fn d_true() -> bool {
    true
}
fn d_c() -> f64 {
    scenario::DEFAULT_C
}
fn d_rep() -> ScalarOrMatrix {
    ScalarOrMatrix::Scalar(scenario::DEFAULT_REPULSION_GAIN)
}
fn d_nn_gain() -> ScalarOrMatrix {
    ScalarOrMatrix::Scalar(scenario::DEFAULT_NN_GAIN)
}
fn d_kappa() -> f64 {
    scenario::DEFAULT_KAPPA
}
fn d_psi() -> ScalarOrMatrix {
    ScalarOrMatrix::Scalar(scenario::DEFAULT_PSI)
}
fn d_psi_vec() -> ScalarOrVector {
    ScalarOrVector::Scalar(scenario::DEFAULT_PSI)
}
fn d_state_basis() -> NamedOrExprs {
    NamedOrExprs::Named("state-12".into())
}
fn d_leader_basis() -> NamedOrExprs {
    NamedOrExprs::Named("leader-12".into())
}
fn d_dist_basis() -> NamedOrExprs {
    NamedOrExprs::Named("disturbance-12".into())
}
fn d_leader_model() -> NamedOrExprs {
    NamedOrExprs::Named("leader".into())
}

fn invalid(invariant: &str, detail: impl Into<String>) -> Error {
    Error::validation(invariant, detail)
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(invalid(what, format!("expected a {nrows}x{ncols} matrix")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn state_from_blocks(blocks: &[Vec<f64>], order: usize, dim: usize, what: &str) -> Result<AgentState> {
    if blocks.len() > order || blocks.iter().any(|b| b.len() != dim) {
        return Err(invalid(
            what,
            format!("expected at most {order} blocks of length {dim}"),
        ));
    }
    let mut x = AgentState::zeros(order, dim);
    for (k, b) in blocks.iter().enumerate() {
        x.set_block(k, &DVector::from_row_slice(b));
    }
    Ok(x)
}

fn blocks_of(x: &AgentState) -> Vec<Vec<f64>> {
    (0..x.order()).map(|k| x.block(k).iter().copied().collect()).collect()
}

fn parse_exprs(exprs: &[String]) -> Result<Vec<Expr>> {
    exprs.iter().map(|s| Expr::parse(s)).collect()
}

fn sources(exprs: &[Expr]) -> Vec<String> {
    exprs.iter().map(|e| e.source().to_string()).collect()
}

fn model_from(spec: &NamedOrExprs, apply_u1: bool) -> Result<DynamicsModel> {
    match spec {
        NamedOrExprs::Exprs(e) => Ok(DynamicsModel::UserDefined(parse_exprs(e)?)),
        NamedOrExprs::Named(name) => match name.as_str() {
            "leader" => Ok(DynamicsModel::Leader),
            "agent-1" => Ok(DynamicsModel::Agent1),
            "agent-2" => Ok(DynamicsModel::Agent2),
            "agent-3" => Ok(DynamicsModel::Agent3),
            "agent-4" => Ok(DynamicsModel::Agent4),
            "agent-5" => Ok(DynamicsModel::Agent5 { apply_u1 }),
            other => Err(invalid("model", format!("unknown builtin model `{other}`"))),
        },
    }
}

fn model_to(m: &DynamicsModel) -> (NamedOrExprs, bool) {
    let named = |s: &str| NamedOrExprs::Named(s.into());
    match m {
        DynamicsModel::Leader => (named("leader"), true),
        DynamicsModel::Agent1 => (named("agent-1"), true),
        DynamicsModel::Agent2 => (named("agent-2"), true),
        DynamicsModel::Agent3 => (named("agent-3"), true),
        DynamicsModel::Agent4 => (named("agent-4"), true),
        DynamicsModel::Agent5 { apply_u1 } => (named("agent-5"), *apply_u1),
        DynamicsModel::UserDefined(e) => (NamedOrExprs::Exprs(sources(e)), true),
    }
}

fn basis_from(spec: &NamedOrExprs) -> Result<BasisSpec> {
    match spec {
        NamedOrExprs::Exprs(e) => Ok(BasisSpec::UserDefined(parse_exprs(e)?)),
        NamedOrExprs::Named(name) => match name.as_str() {
            "state-12" => Ok(BasisSpec::State12),
            "leader-12" => Ok(BasisSpec::Leader12),
            "disturbance-12" => Ok(BasisSpec::Disturbance12),
            other => Err(invalid("basis", format!("unknown builtin basis `{other}`"))),
        },
    }
}

fn basis_to(b: &BasisSpec) -> NamedOrExprs {
    match b {
        BasisSpec::State12 => NamedOrExprs::Named("state-12".into()),
        BasisSpec::Leader12 => NamedOrExprs::Named("leader-12".into()),
        BasisSpec::Disturbance12 => NamedOrExprs::Named("disturbance-12".into()),
        BasisSpec::UserDefined(e) => NamedOrExprs::Exprs(sources(e)),
    }
}

fn disturbance_from(spec: &DisturbanceSpec, dim: usize) -> Result<DisturbanceModel> {
    match spec {
        DisturbanceSpec::Named(n) if n == "default" => Ok(DisturbanceModel::default_mix(dim)),
        DisturbanceSpec::Named(n) if n == "zero" => Ok(DisturbanceModel::Zero),
        DisturbanceSpec::Named(n) => Err(invalid("disturbance", format!("unknown disturbance `{n}`"))),
        DisturbanceSpec::Sines { sines, bound } => {
            let terms = sines
                .iter()
                .map(|&[amplitude, frequency, phase]| SineTerm {
                    amplitude,
                    frequency,
                    phase,
                })
                .collect();
            let model = DisturbanceModel::sinusoidal(terms, dim);
            Ok(match (model, bound) {
                (DisturbanceModel::SinusoidalMix { terms, .. }, Some(b)) => {
                    DisturbanceModel::SinusoidalMix { terms, bound: *b }
                }
                (m, _) => m,
            })
        }
        DisturbanceSpec::Exprs { expressions, bound } => Ok(DisturbanceModel::UserDefined {
            exprs: parse_exprs(expressions)?,
            bound: *bound,
        }),
    }
}

fn disturbance_to(m: &DisturbanceModel) -> DisturbanceSpec {
    match m {
        DisturbanceModel::Zero => DisturbanceSpec::Named("zero".into()),
        DisturbanceModel::SinusoidalMix { terms, bound } => DisturbanceSpec::Sines {
            sines: terms.iter().map(|s| [s.amplitude, s.frequency, s.phase]).collect(),
            bound: Some(*bound),
        },
        DisturbanceModel::UserDefined { exprs, bound } => DisturbanceSpec::Exprs {
            expressions: sources(exprs),
            bound: *bound,
        },
    }
}

fn gain_from(spec: &GainSpec, q: usize) -> Result<TuningGain> {
    TuningGain::new(spec.gain.to_matrix(q, "adaptation gain")?, spec.kappa)
}

fn gain_to(g: &TuningGain) -> GainSpec {
    GainSpec {
        gain: ScalarOrMatrix::from_matrix(&g.gain),
        kappa: g.kappa,
    }
}

fn one_based(idx: usize, count: usize, what: &str) -> Result<usize> {
    if idx == 0 || idx > count {
        return Err(invalid(what, format!("index {idx} outside 1..={count}")));
    }
    Ok(idx - 1)
}

fn topology_from(t: &TopologySection, n_agents: usize) -> Result<Topology> {
    match (&t.adjacency, &t.leader_weights) {
        (Some(adj), Some(b)) => {
            if !(t.leader.is_empty() && t.directed.is_empty() && t.undirected.is_empty()) {
                return Err(invalid("topology", "give either edge lists or adjacency, not both"));
            }
            if b.len() != n_agents {
                return Err(invalid(
                    "topology",
                    format!("{} leader weights for {n_agents} agents", b.len()),
                ));
            }
            Topology::new(
                matrix_from_rows(adj, n_agents, n_agents, "topology")?,
                DVector::from_row_slice(b),
            )
        }
        (None, None) => {
            let leader = t
                .leader
                .iter()
                .map(|&(i, w)| Ok((one_based(i, n_agents, "topology edge")?, w)))
                .collect::<Result<Vec<_>>>()?;
            let edge = |&(a, b, w): &(usize, usize, f64)| {
                Ok((
                    one_based(a, n_agents, "topology edge")?,
                    one_based(b, n_agents, "topology edge")?,
                    w,
                ))
            };
            let directed = t.directed.iter().map(edge).collect::<Result<Vec<_>>>()?;
            let undirected = t.undirected.iter().map(edge).collect::<Result<Vec<_>>>()?;
            Topology::from_edges(n_agents, &leader, &directed, &undirected)
        }
        _ => Err(invalid(
            "topology",
            "adjacency and leader_weights must be given together",
        )),
    }
}

fn schedule_from(s: &ScheduleSection, horizon: f64, n_top: usize) -> Result<SwitchingSchedule> {
    let zero_based = |ids: &[usize]| {
        ids.iter()
            .map(|&i| one_based(i, n_top, "schedule"))
            .collect::<Result<Vec<_>>>()
    };
    match (&s.times, &s.topologies, s.period) {
        (Some(times), Some(ids), _) => SwitchingSchedule::new(times.clone(), zero_based(ids)?, n_top),
        (None, None, Some(period)) => {
            let cycle = match &s.cycle {
                Some(c) => zero_based(c)?,
                None => (0..n_top).collect(),
            };
            SwitchingSchedule::periodic(s.start, period, &cycle, s.start + horizon, n_top)
        }
        (None, None, None) => SwitchingSchedule::new(vec![s.start], vec![0], n_top),
        _ => Err(invalid("schedule", "`times` and `topologies` must be given together")),
    }
}

impl ConfigFile {
    /// Builds and validates the simulation configuration.
    pub fn to_sim_config(&self) -> Result<SimConfig> {
        let (order, dim) = (self.system.order, self.system.dim);
        let n_agents = self.agents.len();
        if n_agents == 0 {
            return Err(invalid("agents", "at least one [[agent]] table is required"));
        }
        if self.topologies.is_empty() {
            return Err(invalid("topology", "at least one [[topology]] table is required"));
        }
        if order < 2 || dim == 0 {
            return Err(invalid("system size", "need order >= 2 and dim >= 1"));
        }
        let c = &self.control;
        let design = match (&c.poles, &c.lambda) {
            (Some(poles), None) => analysis::hurwitz_from_poles(poles, c.beta)?,
            (None, Some(l)) => analysis::hurwitz_from_lambda(&DVector::from_row_slice(l), c.beta)?,
            (None, None) => {
                let poles: Vec<f64> = (1..order).map(|k| k as f64).collect();
                analysis::hurwitz_from_poles(&poles, c.beta)?
            }
            (Some(_), Some(_)) => return Err(invalid("hurwitz", "give either poles or lambda, not both")),
        };
        if design.lambda_bar.len() + 1 != order {
            return Err(invalid(
                "hurwitz",
                format!("need {} poles for order {order}", order - 1),
            ));
        }
        let uniform_c = ControlParams::uniform_c(1, order, dim, c.c).remove(0);
        let c_gain = self
            .agents
            .iter()
            .map(|a| match &a.c {
                Some(rows) => matrix_from_rows(rows, dim, order * dim, "leader-tracking gain"),
                None => Ok(uniform_c.clone()),
            })
            .collect::<Result<Vec<_>>>()?;
        let params = ControlParams {
            nu1: c.nu1,
            nu2: c.nu2,
            lambda_bar: design.lambda_bar.clone(),
            c_gain,
            gamma0: c.gamma0.to_matrix(dim, "repulsion gains")?,
            gamma1: c.gamma1.to_matrix(dim, "repulsion gains")?,
            gamma2: c.gamma2.to_matrix(dim, "repulsion gains")?,
        };
        let ad = &self.adaptation;
        let bases = BasisSet {
            state: basis_from(&ad.state_basis)?,
            leader: basis_from(&ad.leader_basis)?,
            disturbance: basis_from(&ad.disturbance_basis)?,
        };
        let q = [
            bases.state.dimension(),
            bases.leader.dimension(),
            bases.disturbance.dimension(),
        ];
        let gains = self
            .agents
            .iter()
            .map(|a| {
                Ok(AgentGains {
                    state: gain_from(a.state_gain.as_ref().unwrap_or(&ad.state), q[0])?,
                    leader: gain_from(a.leader_gain.as_ref().unwrap_or(&ad.leader), q[1])?,
                    disturbance: gain_from(a.disturbance_gain.as_ref().unwrap_or(&ad.disturbance), q[2])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let f = &self.formation;
        let formation = FormationSpec {
            offsets: self
                .agents
                .iter()
                .map(|a| state_from_blocks(&a.offset, order, dim, "formation offsets"))
                .collect::<Result<_>>()?,
            leader_offset: state_from_blocks(
                f.leader_offset.as_deref().unwrap_or(&[]),
                order,
                dim,
                "formation offsets",
            )?,
            pair_thresholds: match &f.pair_threshold {
                ScalarOrMatrix::Scalar(v) => DMatrix::from_fn(n_agents, n_agents, |i, j| if i == j { 0.0 } else { *v }),
                ScalarOrMatrix::Matrix(rows) => matrix_from_rows(rows, n_agents, n_agents, "pair thresholds")?,
            },
            leader_thresholds: match &f.leader_threshold {
                ScalarOrVector::Scalar(v) => DVector::from_element(n_agents, *v),
                ScalarOrVector::Vector(v) if v.len() == n_agents => DVector::from_row_slice(v),
                ScalarOrVector::Vector(_) => return Err(invalid("leader thresholds", "one value per agent")),
            },
            varpi: f.varpi,
        };
        let o = &self.obstacles;
        if o.centers.iter().any(|c| c.len() != dim) {
            return Err(invalid("obstacles", format!("centers must have {dim} coordinates")));
        }
        let obstacles = ObstacleSet {
            centers: o.centers.iter().map(|c| DVector::from_row_slice(c)).collect(),
            outer_radius: o.outer_radius,
            inner_radius: o.inner_radius,
        };
        let topologies = self
            .topologies
            .iter()
            .map(|t| topology_from(t, n_agents))
            .collect::<Result<Vec<_>>>()?;
        let schedule = schedule_from(&self.schedule, self.simulation.horizon, topologies.len())?;
        let a = &self.analysis;
        let config = SimConfig {
            horizon: self.simulation.horizon,
            step: self.simulation.step,
            stride: self.simulation.stride,
            seed: self.simulation.seed,
            initial_jitter: self.simulation.initial_jitter,
            order,
            dim,
            topologies,
            schedule,
            formation,
            obstacles,
            params,
            design,
            bases,
            gains,
            follower_models: self
                .agents
                .iter()
                .map(|a| model_from(&a.model, a.apply_u1))
                .collect::<Result<_>>()?,
            leader_model: model_from(&self.leader.model, true)?,
            disturbances: self
                .agents
                .iter()
                .map(|a| disturbance_from(&a.disturbance, dim))
                .collect::<Result<_>>()?,
            initial_followers: self
                .agents
                .iter()
                .map(|a| state_from_blocks(&a.initial, order, dim, "initial state"))
                .collect::<Result<_>>()?,
            initial_leader: state_from_blocks(&self.leader.initial, order, dim, "initial state")?,
            ideal_weights: None,
            analysis: AnalysisSettings {
                residual_bound: a.residual_bound,
                iota_gamma: a.iota_gamma,
                kappa_max: a.kappa_max,
                phi_bounds: a.phi_bounds,
                theta_bounds: a.theta_bounds,
                c_e0: a.c_e0,
            },
        };
        config.validate()?;
        Ok(config)
    }

    /// Fully explicit file form of a configuration.
    pub fn from_sim_config(c: &SimConfig) -> Self {
        let (poles, lambda) = if c.design.poles.is_empty() {
            (None, Some(c.design.lambda_bar.iter().copied().collect()))
        } else {
            (Some(c.design.poles.clone()), None)
        };
        let agents = (0..c.n_agents())
            .map(|i| {
                let (model, apply_u1) = model_to(&c.follower_models[i]);
                AgentSection {
                    model,
                    apply_u1,
                    offset: blocks_of(&c.formation.offsets[i]),
                    initial: blocks_of(&c.initial_followers[i]),
                    disturbance: disturbance_to(&c.disturbances[i]),
                    c: Some(rows_of(&c.params.c_gain[i])),
                    state_gain: Some(gain_to(&c.gains[i].state)),
                    leader_gain: Some(gain_to(&c.gains[i].leader)),
                    disturbance_gain: Some(gain_to(&c.gains[i].disturbance)),
                }
            })
            .collect();
        let topologies = c
            .topologies
            .iter()
            .map(|t| TopologySection {
                name: None,
                leader: Vec::new(),
                directed: Vec::new(),
                undirected: Vec::new(),
                adjacency: Some(rows_of(t.adjacency())),
                leader_weights: Some(t.leader_weights().iter().copied().collect()),
            })
            .collect();
        let a = &c.analysis;
        Self {
            simulation: SimulationSection {
                horizon: c.horizon,
                step: c.step,
                stride: c.stride,
                seed: c.seed,
                initial_jitter: c.initial_jitter,
            },
            system: SystemSection {
                order: c.order,
                dim: c.dim,
            },
            control: ControlSection {
                nu1: c.params.nu1,
                nu2: c.params.nu2,
                poles,
                lambda,
                beta: c.design.beta,
                c: 0.0,
                gamma0: ScalarOrMatrix::from_matrix(&c.params.gamma0),
                gamma1: ScalarOrMatrix::from_matrix(&c.params.gamma1),
                gamma2: ScalarOrMatrix::from_matrix(&c.params.gamma2),
            },
            adaptation: AdaptationSection {
                state_basis: basis_to(&c.bases.state),
                leader_basis: basis_to(&c.bases.leader),
                disturbance_basis: basis_to(&c.bases.disturbance),
                ..AdaptationSection::default()
            },
            formation: FormationSection {
                varpi: c.formation.varpi,
                pair_threshold: ScalarOrMatrix::from_matrix(&c.formation.pair_thresholds),
                leader_threshold: ScalarOrVector::Vector(c.formation.leader_thresholds.iter().copied().collect()),
                leader_offset: Some(blocks_of(&c.formation.leader_offset)),
            },
            obstacles: ObstacleSection {
                outer_radius: c.obstacles.outer_radius,
                inner_radius: c.obstacles.inner_radius,
                centers: c
                    .obstacles
                    .centers
                    .iter()
                    .map(|v| v.iter().copied().collect())
                    .collect(),
            },
            leader: LeaderSection {
                model: model_to(&c.leader_model).0,
                initial: blocks_of(&c.initial_leader),
            },
            schedule: ScheduleSection {
                start: c.schedule.start(),
                period: None,
                cycle: None,
                times: Some(c.schedule.switch_times().to_vec()),
                topologies: Some(c.schedule.topology_ids().iter().map(|i| i + 1).collect()),
            },
            analysis: AnalysisSection {
                residual_bound: a.residual_bound,
                iota_gamma: a.iota_gamma,
                kappa_max: a.kappa_max,
                phi_bounds: a.phi_bounds,
                theta_bounds: a.theta_bounds,
                c_e0: a.c_e0,
            },
            agents,
            topologies,
        }
    }
}

/// 1-based line and column of a byte offset.
fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

/// Parses TOML text into the file layout.
pub fn parse_file(src: &str) -> Result<ConfigFile> {
    toml::from_str(src).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(src, s.start));
        Error::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })
}

/// Parses and validates scenario text.
pub fn parse_str(src: &str) -> Result<SimConfig> {
    parse_file(src)?.to_sim_config()
}

pub fn parse_config(path: &Path) -> Result<SimConfig> {
    let src = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_str(&src)
}

/// Serializes a configuration so that [`parse_str`] reproduces it.
pub fn to_toml(config: &SimConfig) -> Result<String> {
    toml::to_string(&ConfigFile::from_sim_config(config)).map_err(|e| Error::ConfigInvalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[simulation]
horizon = 1.0

[[agent]]
model = "agent-2"
offset = [[1.0, 0.0]]
initial = [[2.0, 1.0]]

[[agent]]
model = ["-x[2][1]", "-x[2][2]"]
offset = [[-1.0, 0.0]]
initial = [[-2.0, 1.0]]
disturbance = "zero"

[[topology]]
leader = [[1, 1.0]]
directed = [[1, 2, 1.0]]
"#;

    #[test]
    fn minimal_file_uses_defaults() {
        let c = parse_str(MINIMAL).unwrap();
        assert_eq!(c.n_agents(), 2);
        assert_eq!(c.step, 0.001);
        assert_eq!(c.params.lambda_bar.as_slice(), &[2.0, 3.0]);
        assert_eq!(c.formation.pair_thresholds[(0, 1)], scenario::DEFAULT_PSI);
        assert_eq!(c.topologies[0].a(1, 0), 1.0);
        assert!(matches!(c.follower_models[1], DynamicsModel::UserDefined(_)));
        assert_eq!(c.disturbances[0], DisturbanceModel::default_mix(2));
    }

    #[test]
    fn roundtrip_is_identical() {
        for c in [
            scenario::reference_config(),
            scenario::safety_config(),
            parse_str(MINIMAL).unwrap(),
        ] {
            let text = to_toml(&c).unwrap();
            let back = parse_str(&text).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn syntax_errors_carry_location() {
        let src = "[simulation]\nhorizon = 1.0\nstep = = 2\n";
        match parse_str(src) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 3);
                assert!(column >= 6);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_str("[simulation]\nhorizn = 3\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn inner_radius_must_be_inside_outer() {
        let src = format!("{MINIMAL}\n[obstacles]\nouter_radius = 1.0\ninner_radius = 1.0\ncenters = [[10.0, 10.0]]\n");
        assert!(matches!(parse_str(&src), Err(Error::Validation { invariant, .. }) if invariant == "inner radius"));
    }

    #[test]
    fn overlapping_start_is_rejected() {
        let src = MINIMAL.replace("initial = [[-2.0, 1.0]]", "initial = [[2.0, 1.1]]");
        assert!(
            matches!(parse_str(&src), Err(Error::Validation { invariant, .. }) if invariant == "initial separation")
        );
    }

    #[test]
    fn misaligned_period_is_rejected() {
        let src = format!("{MINIMAL}\n[schedule]\nperiod = 0.0005\n")
            .replace("horizon = 1.0", "horizon = 0.01\nstep = 0.001");
        assert!(matches!(parse_str(&src), Err(Error::Validation { invariant, .. }) if invariant == "switch alignment"));
    }

    #[test]
    fn negative_pole_is_rejected() {
        let src = format!("{MINIMAL}\n[control]\npoles = [1.0, -2.0]\n");
        assert!(matches!(parse_str(&src), Err(Error::NonPositivePole(_))));
    }
}
