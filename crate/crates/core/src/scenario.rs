//! Builtin scenarios: the five-follower switching example and small test rigs.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::analysis;
use crate::controller::{ControlParams, FormationSpec, ObstacleSet};
use crate::dynamics::{AgentState, DisturbanceModel, DynamicsModel};
use crate::graph::{SwitchingSchedule, Topology};
use crate::nn::{BasisSet, BasisSpec, TuningGain};
use crate::report::AnalysisSettings;
use crate::sim::{AgentGains, SimConfig};

/// Switching period of the five-follower example.
pub const SWITCH_PERIOD: f64 = 5.0;

/// The four five-follower topologies, all edge weights 1 (0-based agents).
pub fn fig1_topologies() -> Vec<Topology> {
    let u = |pairs: &[(usize, usize)]| pairs.iter().map(|&(a, b)| (a - 1, b - 1, 1.0)).collect::<Vec<_>>();
    let leader = [(0, 1.0), (4, 1.0)];
    let build = |directed: &[(usize, usize)], undirected: &[(usize, usize)]| {
        Topology::from_edges(5, &leader, &u(directed), &u(undirected)).expect("static topology")
    };
    vec![
        build(&[], &[(1, 2), (1, 5), (1, 3), (2, 3), (4, 5), (5, 3), (2, 4)]),
        build(&[(1, 2), (5, 3)], &[(3, 2), (1, 4), (1, 5), (5, 4), (2, 4)]),
        build(&[], &[(1, 5), (1, 2), (3, 5), (4, 5), (2, 3), (2, 4)]),
        build(&[(2, 4), (5, 4)], &[(1, 2), (3, 4), (1, 5), (1, 3), (2, 5), (2, 3)]),
    ]
}

fn state(blocks: &[[f64; 2]; 3]) -> AgentState {
    AgentState::from_blocks(&blocks.iter().map(|b| b.to_vec()).collect::<Vec<_>>()).expect("3x2 blocks")
}

fn uniform_thresholds(n: usize, psi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { psi })
}

fn gains(q: usize, g: f64, kappa: f64) -> AgentGains {
    let tg = || TuningGain::scaled_identity(q, g, kappa).expect("positive gain");
    AgentGains {
        state: tg(),
        leader: tg(),
        disturbance: tg(),
    }
}

/// Default pole placement, `(s + 1)(s + 2)`.
pub const DEFAULT_POLES: [f64; 2] = [1.0, 2.0];
pub const DEFAULT_BETA: f64 = 1.0;
pub const DEFAULT_C: f64 = 0.5;
pub const DEFAULT_NN_GAIN: f64 = 0.2;
pub const DEFAULT_KAPPA: f64 = 0.1;
pub const DEFAULT_PSI: f64 = 0.5;
pub const DEFAULT_VARPI: f64 = 1.0;
pub const DEFAULT_REPULSION_GAIN: f64 = 2.0;
/// Pair repulsion gain of the collision-course run.
pub const SAFETY_PAIR_GAIN: f64 = 100.0;
/// Radius of the pentagon formation around the leader.
pub const FORMATION_RADIUS: f64 = 2.0;

/// Five builtin followers tracking the builtin leader over the four
/// switching topologies.
pub fn reference_config() -> SimConfig {
    let n_agents = 5;
    let (order, dim) = (3, 2);
    let design = analysis::hurwitz_from_poles(&DEFAULT_POLES, DEFAULT_BETA).expect("positive poles");
    let offsets = (0..n_agents)
        .map(|i| {
            let a = PI / 2.0 + 2.0 * PI * i as f64 / n_agents as f64;
            state(&[
                [FORMATION_RADIUS * a.cos(), FORMATION_RADIUS * a.sin()],
                [0.0; 2],
                [0.0; 2],
            ])
        })
        .collect();
    let formation = FormationSpec {
        offsets,
        leader_offset: AgentState::zeros(order, dim),
        pair_thresholds: uniform_thresholds(n_agents, DEFAULT_PSI),
        leader_thresholds: DVector::from_element(n_agents, DEFAULT_PSI),
        varpi: DEFAULT_VARPI,
    };
    let rep = DMatrix::identity(dim, dim) * DEFAULT_REPULSION_GAIN;
    let params = ControlParams {
        nu1: 1.0,
        nu2: 1.0,
        lambda_bar: design.lambda_bar.clone(),
        c_gain: ControlParams::uniform_c(n_agents, order, dim, DEFAULT_C),
        gamma0: rep.clone(),
        gamma1: rep.clone(),
        gamma2: rep,
    };
    let topologies = fig1_topologies();
    let horizon = 40.0;
    let schedule = SwitchingSchedule::periodic(0.0, SWITCH_PERIOD, &[0, 1, 2, 3], horizon, topologies.len())
        .expect("static schedule");
    let initial_followers = vec![
        state(&[[-1.0, 4.0], [0.5, 0.0], [0.0, 0.0]]),
        state(&[[-4.0, 1.5], [0.0, -0.5], [0.0, 0.0]]),
        state(&[[-3.0, -3.5], [0.0, 0.0], [0.0, 0.0]]),
        state(&[[3.5, -2.5], [-0.5, 0.0], [0.0, 0.0]]),
        state(&[[4.0, 2.5], [0.0, 0.5], [0.0, 0.0]]),
    ];
    SimConfig {
        horizon,
        step: 0.001,
        stride: 1,
        seed: 0,
        initial_jitter: 0.0,
        order,
        dim,
        topologies,
        schedule,
        formation,
        obstacles: ObstacleSet::empty(),
        params,
        design,
        bases: BasisSet::default(),
        gains: (0..n_agents)
            .map(|_| gains(12, DEFAULT_NN_GAIN, DEFAULT_KAPPA))
            .collect(),
        follower_models: (1..=n_agents)
            .map(|k| DynamicsModel::builtin_follower(k).expect("1..=5"))
            .collect(),
        leader_model: DynamicsModel::Leader,
        disturbances: (0..n_agents).map(|_| DisturbanceModel::default_mix(dim)).collect(),
        initial_followers,
        initial_leader: state(&[[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]),
        ideal_weights: None,
        analysis: AnalysisSettings::default(),
    }
}

/// The five-follower run with two followers starting `1.05ψ` apart and
/// heading at each other, plus one obstacle beside the leader's path.
pub fn safety_config() -> SimConfig {
    let mut c = reference_config();
    let psi = c.formation.pair_thresholds[(0, 1)];
    let gap = 1.05 * psi;
    // agent 1's slot lies to the right and agent 2's to the left, so their
    // straight paths pass through each other
    c.initial_followers[0] = state(&[[-1.0 - gap / 2.0, 1.3], [0.0; 2], [0.0; 2]]);
    c.initial_followers[1] = state(&[[-1.0 + gap / 2.0, 1.3], [0.0; 2], [0.0; 2]]);
    c.obstacles = ObstacleSet {
        centers: vec![DVector::from_row_slice(&[1.8, 1.8])],
        outer_radius: 0.8,
        inner_radius: 0.3,
    };
    c.params.gamma1 = DMatrix::identity(c.dim, c.dim) * SAFETY_PAIR_GAIN;
    c
}

/// One follower with zero drift tracking a motionless leader, no disturbance.
pub fn single_agent_config() -> SimConfig {
    let (order, dim) = (3, 2);
    let design = analysis::hurwitz_from_poles(&DEFAULT_POLES, DEFAULT_BETA).expect("positive poles");
    let topology = Topology::from_edges(1, &[(0, 1.0)], &[], &[]).expect("static topology");
    let eye = DMatrix::identity(dim, dim);
    SimConfig {
        horizon: 10.0,
        step: 0.001,
        stride: 1,
        seed: 0,
        initial_jitter: 0.0,
        order,
        dim,
        topologies: vec![topology],
        schedule: SwitchingSchedule::new(vec![0.0], vec![0], 1).expect("static schedule"),
        formation: FormationSpec {
            offsets: vec![state(&[[1.0, 0.0], [0.0; 2], [0.0; 2]])],
            leader_offset: AgentState::zeros(order, dim),
            pair_thresholds: DMatrix::zeros(1, 1),
            leader_thresholds: DVector::from_element(1, 0.2),
            varpi: 1.0,
        },
        obstacles: ObstacleSet::empty(),
        params: ControlParams {
            nu1: 1.0,
            nu2: 1.0,
            lambda_bar: design.lambda_bar.clone(),
            c_gain: ControlParams::uniform_c(1, order, dim, 2.0),
            gamma0: eye.clone(),
            gamma1: eye.clone(),
            gamma2: eye,
        },
        design,
        bases: BasisSet {
            state: BasisSpec::State12,
            leader: BasisSpec::Leader12,
            disturbance: BasisSpec::Disturbance12,
        },
        gains: vec![gains(12, 1.0, 0.1)],
        follower_models: vec![DynamicsModel::zero(dim)],
        leader_model: DynamicsModel::zero(dim),
        disturbances: vec![DisturbanceModel::Zero],
        initial_followers: vec![state(&[[3.0, 1.0], [0.0; 2], [0.0; 2]])],
        initial_leader: AgentState::zeros(order, dim),
        ideal_weights: None,
        analysis: AnalysisSettings::default(),
    }
}

/// Two followers without drift, both listening to the leader.
pub fn pair_config() -> SimConfig {
    let mut c = single_agent_config();
    let (order, dim) = (c.order, c.dim);
    c.topologies = vec![Topology::from_edges(2, &[(0, 1.0), (1, 1.0)], &[], &[(0, 1, 1.0)]).expect("static topology")];
    c.formation.offsets = vec![
        state(&[[-1.0, 0.0], [0.0; 2], [0.0; 2]]),
        state(&[[1.0, 0.0], [0.0; 2], [0.0; 2]]),
    ];
    c.formation.pair_thresholds = uniform_thresholds(2, 0.5);
    c.formation.leader_thresholds = DVector::from_element(2, 0.2);
    c.params.c_gain = ControlParams::uniform_c(2, order, dim, 2.0);
    c.gains = vec![gains(12, 1.0, 0.1), gains(12, 1.0, 0.1)];
    c.follower_models = vec![DynamicsModel::zero(dim), DynamicsModel::zero(dim)];
    c.disturbances = vec![DisturbanceModel::Zero, DisturbanceModel::Zero];
    c.initial_followers = vec![
        state(&[[-2.0, 1.0], [0.0; 2], [0.0; 2]]),
        state(&[[2.0, 1.0], [0.0; 2], [0.0; 2]]),
    ];
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph;

    #[test]
    fn builtin_configs_validate() {
        for c in [
            reference_config(),
            safety_config(),
            single_agent_config(),
            pair_config(),
        ] {
            c.validate().unwrap();
        }
    }

    #[test]
    fn fig1_graphs_are_leader_rooted() {
        for t in fig1_topologies() {
            assert!(graph::check_leader_rooted(&t));
            graph::graph_lyapunov(&t, 1.0, 1.0).unwrap();
        }
    }

    #[test]
    fn safety_pair_starts_just_outside_threshold() {
        let c = safety_config();
        let d = (c.initial_followers[0].position() - c.initial_followers[1].position()).norm();
        assert!((d - 1.05 * DEFAULT_PSI).abs() < 1e-12);
    }
}
