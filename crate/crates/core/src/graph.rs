//! Communication topologies, switching schedules and graph-derived matrices.
//!
//! Follower `i` receives information from follower `j` when `a_ij > 0` and
//! from the leader when `b_i0 > 0`. All matrices are indexed by follower
//! (the leader is not a row of the Laplacian).

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// A weighted follower digraph plus leader couplings.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    adjacency: DMatrix<f64>,
    leader_weights: DVector<f64>,
}

/// `D`, `L = D - A` and `B` for one topology.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphMatrices {
    pub degree: DMatrix<f64>,
    pub laplacian: DMatrix<f64>,
    pub leader: DMatrix<f64>,
}

impl Topology {
    pub fn new(adjacency: DMatrix<f64>, leader_weights: DVector<f64>) -> Result<Self> {
        let n = adjacency.nrows();
        if !adjacency.is_square() || leader_weights.len() != n {
            return Err(Error::dims(format!(
                "adjacency {:?} with {} leader weights",
                adjacency.shape(),
                leader_weights.len()
            )));
        }
        if n == 0 {
            return Err(Error::validation("topology", "at least one follower is required"));
        }
        for (idx, v) in adjacency.iter().chain(leader_weights.iter()).enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::validation(
                    "topology weights",
                    format!("entry {idx} is {v}; weights must be finite and >= 0"),
                ));
            }
        }
        if let Some(i) = (0..n).find(|&i| adjacency[(i, i)] != 0.0) {
            return Err(Error::validation(
                "topology self-loop",
                format!("a_{0}{0} must be zero", i + 1),
            ));
        }
        Ok(Self {
            adjacency,
            leader_weights,
        })
    }

    /// Builds a topology from 0-based edge lists.
    ///
    /// `directed` holds `(from, to, weight)` meaning `to` listens to `from`;
    /// `undirected` edges are inserted in both directions.
    pub fn from_edges(
        n_agents: usize,
        leader_links: &[(usize, f64)],
        directed: &[(usize, usize, f64)],
        undirected: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut a = DMatrix::zeros(n_agents, n_agents);
        let mut b = DVector::zeros(n_agents);
        let check = |idx: usize| {
            if idx >= n_agents {
                Err(Error::validation(
                    "topology edge",
                    format!("agent index {} out of range 1..={n_agents}", idx + 1),
                ))
            } else {
                Ok(())
            }
        };
        for &(i, w) in leader_links {
            check(i)?;
            b[i] = w;
        }
        for &(from, to, w) in directed {
            check(from)?;
            check(to)?;
            a[(to, from)] = w;
        }
        for &(x, y, w) in undirected {
            check(x)?;
            check(y)?;
            a[(x, y)] = w;
            a[(y, x)] = w;
        }
        Self::new(a, b)
    }

    pub fn n_agents(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn leader_weights(&self) -> &DVector<f64> {
        &self.leader_weights
    }

    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.adjacency[(i, j)]
    }

    pub fn b(&self, i: usize) -> f64 {
        self.leader_weights[i]
    }

    /// In-degree `d_i`.
    pub fn in_degree(&self, i: usize) -> f64 {
        self.adjacency.row(i).sum()
    }

    /// `d_i + b_i0`.
    pub fn degree_sum(&self, i: usize) -> f64 {
        self.in_degree(i) + self.leader_weights[i]
    }
}

pub fn build_matrices(topology: &Topology) -> GraphMatrices {
    let n = topology.n_agents();
    let a = topology.adjacency();
    let degree = DMatrix::from_diagonal(&DVector::from_iterator(n, (0..n).map(|i| topology.in_degree(i))));
    let mut laplacian = -a.clone();
    for i in 0..n {
        // Row sums are exactly zero: the diagonal is minus the sum of the
        // off-diagonal entries as stored.
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| laplacian[(i, j)]).sum();
        laplacian[(i, i)] = -off;
    }
    let leader = DMatrix::from_diagonal(topology.leader_weights());
    GraphMatrices {
        degree,
        laplacian,
        leader,
    }
}

/// Breadth-first reachability of every follower from the leader node.
pub fn check_leader_rooted(topology: &Topology) -> bool {
    let n = topology.n_agents();
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| topology.b(i) > 0.0).collect();
    for &i in &queue {
        seen[i] = true;
    }
    while let Some(j) = queue.pop_front() {
        for i in 0..n {
            if !seen[i] && topology.a(i, j) > 0.0 {
                seen[i] = true;
                queue.push_back(i);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// `ν₁ L + ν₂ B`, rejected when numerically singular.
pub fn coupling_matrix(topology: &Topology, nu1: f64, nu2: f64) -> Result<DMatrix<f64>> {
    let m = build_matrices(topology);
    let coupling = m.laplacian * nu1 + m.leader * nu2;
    let n = coupling.nrows() as i32;
    let tol = 1e-12 * linalg::inf_norm(&coupling).powi(n);
    let det = coupling.determinant();
    if !(det.abs() > tol) {
        return Err(Error::SingularCoupling { det, tol });
    }
    Ok(coupling)
}

/// Diagonal Lyapunov weighting for one topology.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphLyapunov {
    /// `q = (ν₁L + ν₂B)⁻¹ 1`.
    pub q: DVector<f64>,
    /// `diag(1/q_i)`.
    pub p: DMatrix<f64>,
    /// `P£ + £ᵀP`.
    pub q_matrix: DMatrix<f64>,
    pub q_min_eigenvalue: f64,
    pub q_max_eigenvalue: f64,
}

impl GraphLyapunov {
    /// Diagonal entry `p_i = 1/q_i`.
    pub fn p_i(&self, i: usize) -> f64 {
        self.p[(i, i)]
    }

    pub fn p_extremes(&self) -> (f64, f64) {
        let diag = self.p.diagonal();
        (diag.min(), diag.max())
    }
}

/// Weights `q`, `P` without requiring `Q` to be positive definite.
///
/// `q > 0` holds for every nonsingular coupling of a leader-rooted graph;
/// the adaptation laws only need `P`.
pub fn graph_weights(topology: &Topology, nu1: f64, nu2: f64) -> Result<GraphLyapunov> {
    let coupling = coupling_matrix(topology, nu1, nu2)?;
    let n = coupling.nrows();
    let q = coupling
        .clone()
        .lu()
        .solve(&DVector::from_element(n, 1.0))
        .ok_or(Error::SingularCoupling { det: 0.0, tol: 0.0 })?;
    if let Some(i) = q.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::NonPositiveQ(format!("q_{} = {}", i + 1, q[i])));
    }
    let p = DMatrix::from_diagonal(&q.map(|v| 1.0 / v));
    let q_matrix = &p * &coupling + coupling.transpose() * &p;
    let (lo, hi) = linalg::sym_eigen_extremes(&q_matrix);
    Ok(GraphLyapunov {
        q,
        p,
        q_matrix,
        q_min_eigenvalue: lo,
        q_max_eigenvalue: hi,
    })
}

/// Like [`graph_weights`] but insists that `Q` is positive definite.
pub fn graph_lyapunov(topology: &Topology, nu1: f64, nu2: f64) -> Result<GraphLyapunov> {
    let gl = graph_weights(topology, nu1, nu2)?;
    if !(gl.q_min_eigenvalue > 0.0) {
        return Err(Error::NonPositiveQ(format!(
            "smallest eigenvalue of Q is {:e}",
            gl.q_min_eigenvalue
        )));
    }
    Ok(gl)
}

/// Second-smallest eigenvalue of the symmetrised Laplacian `(L + Lᵀ)/2`.
///
/// A diagnostic only: directed Laplacians have no natural eigenvalue order.
pub fn algebraic_connectivity(topology: &Topology) -> f64 {
    let l = build_matrices(topology).laplacian;
    let sym = (&l + l.transpose()) * 0.5;
    let ev = linalg::sym_eigenvalues_sorted(&sym);
    if ev.len() < 2 {
        0.0
    } else {
        // Clamp round-off around a zero eigenvalue.
        if ev[1].abs() < 1e-12 {
            0.0
        } else {
            ev[1]
        }
    }
}

/// Piecewise-constant switching signal over predetermined instants.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSchedule {
    switch_times: Vec<f64>,
    topology_ids: Vec<usize>,
}

impl SwitchingSchedule {
    /// `switch_times[0]` is the start time; `topology_ids[s]` is active on
    /// `[switch_times[s], switch_times[s+1])`.
    pub fn new(switch_times: Vec<f64>, topology_ids: Vec<usize>, n_topologies: usize) -> Result<Self> {
        if switch_times.is_empty() || switch_times.len() != topology_ids.len() {
            return Err(Error::validation(
                "schedule",
                format!(
                    "{} switch times for {} topology ids",
                    switch_times.len(),
                    topology_ids.len()
                ),
            ));
        }
        if switch_times.iter().any(|t| !t.is_finite()) || switch_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation(
                "schedule",
                "switch times must be strictly increasing",
            ));
        }
        if let Some(bad) = topology_ids.iter().find(|&&id| id >= n_topologies) {
            return Err(Error::validation(
                "schedule",
                format!("topology id {bad} out of range (have {n_topologies})"),
            ));
        }
        Ok(Self {
            switch_times,
            topology_ids,
        })
    }

    /// Cycles through `cycle` every `period` seconds from `start` until `horizon`.
    pub fn periodic(start: f64, period: f64, cycle: &[usize], horizon: f64, n_topologies: usize) -> Result<Self> {
        if !(period > 0.0) || cycle.is_empty() {
            return Err(Error::validation(
                "schedule",
                "period must be > 0 with a non-empty cycle",
            ));
        }
        let count = ((horizon - start) / period).floor().max(0.0) as usize + 1;
        let times = (0..count).map(|s| start + s as f64 * period).collect();
        let ids = (0..count).map(|s| cycle[s % cycle.len()]).collect();
        Self::new(times, ids, n_topologies)
    }

    pub fn start(&self) -> f64 {
        self.switch_times[0]
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.switch_times
    }

    pub fn topology_ids(&self) -> &[usize] {
        &self.topology_ids
    }

    /// Active topology id at `t` and the number of switches in `(t₀, t]`.
    pub fn active_index(&self, t: f64) -> (usize, usize) {
        let s = self.switch_times.partition_point(|&ts| ts <= t);
        let s = s.saturating_sub(1);
        (self.topology_ids[s], s)
    }
}

pub fn active_index(schedule: &SwitchingSchedule, t: f64) -> (usize, usize) {
    schedule.active_index(t)
}
