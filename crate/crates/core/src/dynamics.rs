//! Brunovsky-form agent vector fields and disturbance signals.

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::expr::Expr;

/// Stacked state `[x¹; x²; …; xⁿ]` with each block of dimension `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    order: usize,
    dim: usize,
    data: DVector<f64>,
}

impl AgentState {
    pub fn zeros(order: usize, dim: usize) -> Self {
        Self {
            order,
            dim,
            data: DVector::zeros(order * dim),
        }
    }

    pub fn from_vec(order: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if order == 0 || dim == 0 || values.len() != order * dim {
            return Err(Error::dims(format!(
                "state of {} values cannot hold {order} blocks of {dim}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("agent state", "entries must be finite"));
        }
        Ok(Self {
            order,
            dim,
            data: DVector::from_vec(values),
        })
    }

    /// Builds a state from its blocks, e.g. `[[px, py], [vx, vy], [ax, ay]]`.
    pub fn from_blocks(blocks: &[Vec<f64>]) -> Result<Self> {
        let dim = blocks.first().map_or(0, Vec::len);
        if blocks.iter().any(|b| b.len() != dim) {
            return Err(Error::dims("state blocks have unequal lengths"));
        }
        Self::from_vec(blocks.len(), dim, blocks.concat())
    }

    pub(crate) fn from_slice_unchecked(order: usize, dim: usize, values: &[f64]) -> Self {
        Self {
            order,
            dim,
            data: DVector::from_column_slice(values),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice()
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.data.as_mut_slice()
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.data
    }

    /// Block `k` (0-based: 0 is position).
    pub fn block(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.data.as_slice()[k * self.dim..(k + 1) * self.dim])
    }

    pub fn set_block(&mut self, k: usize, v: &DVector<f64>) {
        let dim = self.dim;
        self.data.as_mut_slice()[k * dim..(k + 1) * dim].copy_from_slice(v.as_slice());
    }

    /// Component `d` of block `k`, both 0-based.
    pub fn get(&self, k: usize, d: usize) -> f64 {
        self.data[k * self.dim + d]
    }

    pub fn position(&self) -> DVector<f64> {
        self.block(0)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Agent or leader drift `f(x, t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum DynamicsModel {
    Leader,
    Agent1,
    Agent2,
    Agent3,
    Agent4,
    /// `apply_u1 = false` drops the first input channel, reproducing the
    /// printed model literally.
    Agent5 {
        apply_u1: bool,
    },
    /// One expression per output component.
    UserDefined(Vec<Expr>),
}

impl DynamicsModel {
    /// Builtin follower model by 1-based index.
    pub fn builtin_follower(index: usize) -> Option<Self> {
        match index {
            1 => Some(Self::Agent1),
            2 => Some(Self::Agent2),
            3 => Some(Self::Agent3),
            4 => Some(Self::Agent4),
            5 => Some(Self::Agent5 { apply_u1: true }),
            _ => None,
        }
    }

    /// Zero drift for a `p`-dimensional agent.
    pub fn zero(p: usize) -> Self {
        Self::UserDefined((0..p).map(|_| Expr::parse("0").expect("literal")).collect())
    }

    pub fn user_defined(exprs: &[&str]) -> Result<Self> {
        exprs
            .iter()
            .map(|s| Expr::parse(s))
            .collect::<Result<Vec<_>>>()
            .map(Self::UserDefined)
    }

    pub fn is_builtin(&self) -> bool {
        !matches!(self, Self::UserDefined(_))
    }

    /// Checks that this model can act on an `n`×`p` state.
    pub fn check_dims(&self, n: usize, p: usize) -> Result<()> {
        match self {
            Self::UserDefined(exprs) => {
                if exprs.len() != p {
                    return Err(Error::dims(format!(
                        "{} drift expressions for dimension {p}",
                        exprs.len()
                    )));
                }
                exprs.iter().try_for_each(|e| e.check_dims(n, p))
            }
            _ if n == 3 && p == 2 => Ok(()),
            _ => Err(Error::dims(format!(
                "builtin models need n = 3, p = 2; got n = {n}, p = {p}"
            ))),
        }
    }

    /// Evaluates the drift. Builtin models act identically on each axis.
    pub fn drift(&self, x: &AgentState, t: f64) -> Result<DVector<f64>> {
        self.check_dims(x.order(), x.dim())?;
        let p = x.dim();
        let out = match self {
            Self::UserDefined(exprs) => DVector::from_iterator(p, exprs.iter().map(|e| e.eval(x.as_slice(), p, t))),
            builtin => DVector::from_iterator(
                p,
                (0..p).map(|d| builtin.axis_drift(x.get(0, d), x.get(1, d), x.get(2, d))),
            ),
        };
        Ok(out)
    }

    fn axis_drift(&self, x1: f64, x2: f64, x3: f64) -> f64 {
        match self {
            Self::Leader => {
                -x2 - 2.0 * x3 + 1.0 + 3.0 * (2.0 * PI * x1).sin()
                    - (x1 + x2 - 1.0).powi(2) * (x1 + 4.0 * x2 + 3.0 * x3 - 1.0) / 3.0
            }
            Self::Agent1 => -x2 * x2.sin() - x3.cos().powi(2) - 0.1 * x2 * x2 - 0.05 * x3 * x3,
            Self::Agent2 => -x2 * x2 + 0.01 * x3 - 0.01 * x2.powi(3) - 0.1 * x3 * x3 - 0.1 * x2,
            Self::Agent3 => x2 + x3.sin() - 0.05 * x2 * x2 - 0.05 * x3 * x3,
            Self::Agent4 => {
                -3.0 * (x1 + x2 - 1.0).powi(2) * (x1 + x2 + x3 - 1.0) - x2 - x3
                    + 0.5 * (2.0 * PI * x1).sin()
                    + (2.0 * PI * x1).cos()
            }
            Self::Agent5 { .. } => -x2 - 0.05 * x3 * x3 + x1,
            Self::UserDefined(_) => unreachable!("handled by drift"),
        }
    }

    /// Per-channel input gain (0 where a channel is disabled).
    pub fn input_mask(&self, p: usize) -> DVector<f64> {
        let mut mask = DVector::from_element(p, 1.0);
        if let Self::Agent5 { apply_u1: false } = self {
            mask[0] = 0.0;
        }
        mask
    }
}

fn chain_derivative(x: &AgentState, top: DVector<f64>) -> AgentState {
    let (n, p) = (x.order(), x.dim());
    let mut out = AgentState::zeros(n, p);
    let src = x.as_slice();
    let dst = out.as_mut_slice();
    dst[..(n - 1) * p].copy_from_slice(&src[p..]);
    dst[(n - 1) * p..].copy_from_slice(top.as_slice());
    out
}

/// `ẋᵏ = xᵏ⁺¹` for `k < n`, `ẋⁿ = f(x) + u + w`.
pub fn follower_derivative(
    model: &DynamicsModel,
    x: &AgentState,
    u: &DVector<f64>,
    w: &DVector<f64>,
    t: f64,
) -> Result<AgentState> {
    let p = x.dim();
    if u.len() != p || w.len() != p {
        return Err(Error::dims(format!(
            "input {} / disturbance {} for dimension {p}",
            u.len(),
            w.len()
        )));
    }
    let f = model.drift(x, t)?;
    let top = f + u.component_mul(&model.input_mask(p)) + w;
    Ok(chain_derivative(x, top))
}

/// `ẋ₀ᵏ = x₀ᵏ⁺¹` for `k < n`, `ẋ₀ⁿ = f₀(x₀, t)`.
pub fn leader_derivative(model: &DynamicsModel, x0: &AgentState, t: f64) -> Result<AgentState> {
    let f = model.drift(x0, t)?;
    Ok(chain_derivative(x0, f))
}

/// One `a·sin(ω t + φ)` term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineTerm {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceModel {
    Zero,
    /// The same sum of sines on every axis.
    SinusoidalMix {
        terms: Vec<SineTerm>,
        bound: f64,
    },
    /// One expression per axis in `t` (state references are rejected).
    UserDefined {
        exprs: Vec<Expr>,
        bound: f64,
    },
}

impl DisturbanceModel {
    /// `0.1 sin t + 0.05 cos 2t` per axis.
    pub fn default_mix(p: usize) -> Self {
        let terms = vec![
            SineTerm {
                amplitude: 0.1,
                frequency: 1.0,
                phase: 0.0,
            },
            SineTerm {
                amplitude: 0.05,
                frequency: 2.0,
                phase: PI / 2.0,
            },
        ];
        Self::sinusoidal(terms, p)
    }

    /// Sum of sines with the amplitude bound `Σ|a|·√p`.
    pub fn sinusoidal(terms: Vec<SineTerm>, p: usize) -> Self {
        let bound = terms.iter().map(|s| s.amplitude.abs()).sum::<f64>() * (p as f64).sqrt();
        Self::SinusoidalMix { terms, bound }
    }

    pub fn bound(&self) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::SinusoidalMix { bound, .. } | Self::UserDefined { bound, .. } => *bound,
        }
    }

    fn raw(&self, t: f64, p: usize) -> DVector<f64> {
        match self {
            Self::Zero => DVector::zeros(p),
            Self::SinusoidalMix { terms, .. } => {
                let v: f64 = terms
                    .iter()
                    .map(|s| s.amplitude * (s.frequency * t + s.phase).sin())
                    .sum();
                DVector::from_element(p, v)
            }
            Self::UserDefined { exprs, .. } => DVector::from_iterator(p, exprs.iter().map(|e| e.eval(&[], p, t))),
        }
    }
}

/// Evaluates `w(t)` and checks it against the declared bound.
pub fn disturbance(model: &DisturbanceModel, t: f64, p: usize) -> Result<DVector<f64>> {
    if let DisturbanceModel::UserDefined { exprs, .. } = model {
        if exprs.len() != p {
            return Err(Error::dims(format!(
                "{} disturbance expressions for dimension {p}",
                exprs.len()
            )));
        }
    }
    let w = model.raw(t, p);
    let norm = w.norm();
    let bound = model.bound();
    if !(norm <= bound * (1.0 + 1e-12) + 1e-15) {
        return Err(Error::BoundViolation { t, norm, bound });
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(v: [f64; 6]) -> AgentState {
        AgentState::from_vec(3, 2, v.to_vec()).unwrap()
    }

    fn zero2() -> DVector<f64> {
        DVector::zeros(2)
    }

    #[test]
    fn chain_structure() {
        let x = st([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        for i in 1..=5 {
            let m = DynamicsModel::builtin_follower(i).unwrap();
            let d = follower_derivative(&m, &x, &zero2(), &zero2(), 0.0).unwrap();
            assert_eq!(&d.as_slice()[..4], &[3.0, 4.0, 5.0, 6.0]);
        }
        let d = leader_derivative(&DynamicsModel::Leader, &x, 0.0).unwrap();
        assert_eq!(d.block(0), x.block(1));
        assert_eq!(d.block(1), x.block(2));
    }

    #[test]
    fn drifts_at_origin() {
        let x = AgentState::zeros(3, 2);
        for m in [
            DynamicsModel::Agent2,
            DynamicsModel::Agent3,
            DynamicsModel::Agent5 { apply_u1: true },
        ] {
            assert_eq!(m.drift(&x, 0.0).unwrap(), zero2());
        }
        // These two do not vanish at the origin as printed.
        assert_eq!(DynamicsModel::Agent1.drift(&x, 0.0).unwrap()[0], -1.0);
        assert_eq!(DynamicsModel::Agent4.drift(&x, 0.0).unwrap()[0], 4.0);
    }

    #[test]
    fn agent5_velocity_term() {
        let x = st([0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let m = DynamicsModel::Agent5 { apply_u1: true };
        let d = follower_derivative(&m, &x, &zero2(), &zero2(), 0.0).unwrap();
        assert_eq!(d.get(2, 0), -1.0);
    }

    #[test]
    fn agent5_u1_flag() {
        let x = AgentState::zeros(3, 2);
        let u = DVector::from_vec(vec![1.0, 1.0]);
        let on = follower_derivative(&DynamicsModel::Agent5 { apply_u1: true }, &x, &u, &zero2(), 0.0).unwrap();
        let off = follower_derivative(&DynamicsModel::Agent5 { apply_u1: false }, &x, &u, &zero2(), 0.0).unwrap();
        assert_eq!(on.get(2, 0), 1.0);
        assert_eq!(off.get(2, 0), 0.0);
        assert_eq!(off.get(2, 1), 1.0);
    }

    #[test]
    fn agent1_substitution() {
        let h = PI / 2.0;
        let x = st([0.0, 0.0, h, 0.0, 0.0, 0.0]);
        let d = follower_derivative(&DynamicsModel::Agent1, &x, &zero2(), &zero2(), 0.0).unwrap();
        let expected = -h * h.sin() - 1.0 - 0.1 * h * h;
        assert!((d.get(2, 0) - expected).abs() < 1e-15);
        assert!((expected - (-PI / 2.0 - 1.0 - 0.1 * PI * PI / 4.0)).abs() < 1e-15);
    }

    #[test]
    fn leader_values() {
        let d = leader_derivative(&DynamicsModel::Leader, &AgentState::zeros(3, 2), 0.0).unwrap();
        assert!((d.get(2, 0) - 4.0 / 3.0).abs() < 1e-15);
        let x = st([0.25, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let d = leader_derivative(&DynamicsModel::Leader, &x, 0.0).unwrap();
        // 1 + 3 - (0.25 - 1)^2 (0.25 - 1) / 3
        let oracle = 1.0 + 3.0 - (-0.75f64).powi(3) / 3.0;
        assert!((d.get(2, 0) - oracle).abs() < 1e-14);
    }

    #[test]
    fn user_defined_model() {
        let m = DynamicsModel::user_defined(&["-x[1][1] - x[2][1]", "t"]).unwrap();
        let x = AgentState::from_vec(2, 2, vec![1.0, 0.0, 2.0, 0.0]).unwrap();
        let f = m.drift(&x, 0.5).unwrap();
        assert_eq!(f.as_slice(), &[-3.0, 0.5]);
        assert!(DynamicsModel::Agent1.drift(&x, 0.0).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let x = AgentState::zeros(3, 2);
        let u = DVector::zeros(3);
        assert!(matches!(
            follower_derivative(&DynamicsModel::Agent2, &x, &u, &zero2(), 0.0),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn disturbances() {
        assert_eq!(disturbance(&DisturbanceModel::Zero, 3.0, 2).unwrap(), zero2());
        let m = DisturbanceModel::default_mix(2);
        let w0 = disturbance(&m, 0.0, 2).unwrap();
        assert!((w0[0] - 0.05).abs() < 1e-15 && (w0[1] - 0.05).abs() < 1e-15);
        for k in 0..1000 {
            let t = k as f64 * 0.037;
            let w = disturbance(&m, t, 2).unwrap();
            let expected = 0.1 * t.sin() + 0.05 * (2.0 * t).cos();
            assert!((w[0] - expected).abs() < 1e-15);
            assert!(w.norm() <= 0.15 * 2f64.sqrt() + 1e-15);
        }
        let bad = DisturbanceModel::UserDefined {
            exprs: vec![Expr::parse("2 * sin(t)").unwrap(), Expr::parse("0").unwrap()],
            bound: 1.0,
        };
        assert!(disturbance(&bad, 0.0, 2).is_ok());
        assert!(matches!(
            disturbance(&bad, PI / 2.0, 2),
            Err(Error::BoundViolation { .. })
        ));
    }

    fn jacobian(m: &DynamicsModel, x: &AgentState, h: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for c in 0..6 {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus.as_mut_slice()[c] += h;
            minus.as_mut_slice()[c] -= h;
            let d = (m.drift(&plus, 0.0).unwrap() - m.drift(&minus, 0.0).unwrap()) / (2.0 * h);
            out.extend(d.iter());
        }
        out
    }

    #[test]
    fn finite_difference_jacobian_consistency() {
        let x = st([0.3, -0.2, 0.5, 0.1, -0.4, 0.7]);
        let models = [
            DynamicsModel::Leader,
            DynamicsModel::Agent1,
            DynamicsModel::Agent2,
            DynamicsModel::Agent3,
            DynamicsModel::Agent4,
            DynamicsModel::Agent5 { apply_u1: true },
        ];
        for m in &models {
            let coarse = jacobian(m, &x, 1e-5);
            let fine = jacobian(m, &x, 1e-6);
            for (a, b) in coarse.iter().zip(&fine) {
                assert!((a - b).abs() <= 1e-4 * (1.0 + b.abs()), "{m:?}: {a} vs {b}");
            }
        }
    }
}
