//! Linear-in-parameters approximators and their tuning laws.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::AgentState;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub enum BasisSpec {
    /// `[1, six state components, squares of the first five]`.
    State12,
    /// Polynomial-trigonometric-exponential dictionary in `t`.
    Disturbance12,
    /// The state basis applied to the leader state.
    Leader12,
    /// Arbitrary expressions in `x[k][d]` and `t`.
    UserDefined(Vec<Expr>),
}

impl BasisSpec {
    pub fn dimension(&self) -> usize {
        match self {
            Self::UserDefined(e) => e.len(),
            _ => 12,
        }
    }

    pub fn eval(&self, x: &AgentState, t: f64) -> Result<DVector<f64>> {
        match self {
            Self::State12 | Self::Leader12 => eval_state_basis(x),
            Self::Disturbance12 => Ok(eval_disturbance_basis(t)),
            Self::UserDefined(exprs) => {
                if exprs.is_empty() {
                    return Err(Error::validation("basis", "dimension must be >= 1"));
                }
                Ok(DVector::from_iterator(
                    exprs.len(),
                    exprs.iter().map(|e| e.eval(x.as_slice(), x.dim(), t)),
                ))
            }
        }
    }
}

pub fn eval_state_basis(x: &AgentState) -> Result<DVector<f64>> {
    if x.order() != 3 || x.dim() != 2 {
        return Err(Error::dims(format!(
            "the 12-term state basis needs n = 3, p = 2; got n = {}, p = {}",
            x.order(),
            x.dim()
        )));
    }
    let s = x.as_slice();
    let mut v = [0.0; 12];
    v[0] = 1.0;
    v[1..7].copy_from_slice(s);
    for k in 0..5 {
        v[7 + k] = s[k] * s[k];
    }
    Ok(DVector::from_row_slice(&v))
}

pub fn eval_disturbance_basis(t: f64) -> DVector<f64> {
    let (s, c) = t.sin_cos();
    let e = (-t).exp();
    DVector::from_row_slice(&[
        1.0,
        s,
        c,
        (2.0 * t).sin(),
        (2.0 * t).cos(),
        (3.0 * t).sin(),
        (3.0 * t).cos(),
        s * s,
        c * c,
        s * c,
        e,
        t * e,
    ])
}

/// The three bases used by one follower.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    pub state: BasisSpec,
    pub leader: BasisSpec,
    pub disturbance: BasisSpec,
}

impl Default for BasisSet {
    fn default() -> Self {
        Self {
            state: BasisSpec::State12,
            leader: BasisSpec::Leader12,
            disturbance: BasisSpec::Disturbance12,
        }
    }
}

/// `θ̂ᵀφ`.
pub fn estimate(weights: &DMatrix<f64>, basis: &DVector<f64>) -> Result<DVector<f64>> {
    if weights.nrows() != basis.len() {
        return Err(Error::dims(format!(
            "weights have {} rows, basis has {} entries",
            weights.nrows(),
            basis.len()
        )));
    }
    Ok(weights.tr_mul(basis))
}

/// Gain matrix and leakage for one estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningGain {
    pub gain: DMatrix<f64>,
    pub kappa: f64,
}

impl TuningGain {
    pub fn new(gain: DMatrix<f64>, kappa: f64) -> Result<Self> {
        if !linalg::is_spd(&gain, 1e-12) {
            return Err(Error::validation(
                "adaptation gain",
                "gain matrices must be symmetric positive definite",
            ));
        }
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::validation(
                "adaptation gain",
                format!("kappa = {kappa} must be > 0"),
            ));
        }
        Ok(Self { gain, kappa })
    }

    /// `g·I` with leakage `kappa`.
    pub fn scaled_identity(q: usize, g: f64, kappa: f64) -> Result<Self> {
        Self::new(DMatrix::identity(q, q) * g, kappa)
    }
}

/// Per-agent weight estimates and gains.
#[derive(Debug, Clone, PartialEq)]
pub struct NNBank {
    pub theta_hat: DMatrix<f64>,
    pub theta0_hat: DMatrix<f64>,
    pub thetaw_hat: DMatrix<f64>,
    pub state_gain: TuningGain,
    pub leader_gain: TuningGain,
    pub disturbance_gain: TuningGain,
}

impl NNBank {
    /// Zero initial weights.
    pub fn new(p: usize, state_gain: TuningGain, leader_gain: TuningGain, disturbance_gain: TuningGain) -> Self {
        Self {
            theta_hat: DMatrix::zeros(state_gain.gain.nrows(), p),
            theta0_hat: DMatrix::zeros(leader_gain.gain.nrows(), p),
            thetaw_hat: DMatrix::zeros(disturbance_gain.gain.nrows(), p),
            state_gain,
            leader_gain,
            disturbance_gain,
        }
    }

    pub fn is_finite(&self) -> bool {
        [&self.theta_hat, &self.theta0_hat, &self.thetaw_hat]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()))
    }

    pub fn weight_norms(&self) -> [f64; 3] {
        [self.theta_hat.norm(), self.theta0_hat.norm(), self.thetaw_hat.norm()]
    }
}

/// Weight derivatives `(dθ̂, dθ̂₀, dθ̂_w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightRates {
    pub theta: DMatrix<f64>,
    pub theta0: DMatrix<f64>,
    pub thetaw: DMatrix<f64>,
}

fn law(
    gain: &TuningGain,
    weights: &DMatrix<f64>,
    basis: &DVector<f64>,
    r: &DVector<f64>,
    scale: f64,
    sign: f64,
) -> Result<DMatrix<f64>> {
    if basis.len() != weights.nrows() || r.len() != weights.ncols() {
        return Err(Error::dims(format!(
            "basis {} / error {} against weights {:?}",
            basis.len(),
            r.len(),
            weights.shape()
        )));
    }
    let drive = basis * r.transpose() * scale;
    Ok(&gain.gain * (drive * sign - weights * gain.kappa))
}

/// Right-hand sides of the three tuning laws for one agent.
///
/// The agent and disturbance laws are `−G[φ rᵀ pᵢ(dᵢ+bᵢ₀) + κθ̂]`; the
/// leader law drives with the opposite sign, `G₀[φ₀ rᵀ pᵢ(dᵢ+bᵢ₀) − κ₀θ̂₀]`.
pub fn tuning_derivatives(
    bank: &NNBank,
    phi: &DVector<f64>,
    phi0: &DVector<f64>,
    phiw: &DVector<f64>,
    r: &DVector<f64>,
    p_i: f64,
    degree_sum: f64,
) -> Result<WeightRates> {
    let scale = p_i * degree_sum;
    Ok(WeightRates {
        theta: law(&bank.state_gain, &bank.theta_hat, phi, r, scale, -1.0)?,
        theta0: law(&bank.leader_gain, &bank.theta0_hat, phi0, r, scale, 1.0)?,
        thetaw: law(&bank.disturbance_gain, &bank.thetaw_hat, phiw, r, scale, -1.0)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bank1(g: f64, kappa: f64) -> NNBank {
        let tg = || TuningGain::scaled_identity(1, g, kappa).unwrap();
        NNBank::new(1, tg(), tg(), tg())
    }

    #[test]
    fn state_basis_examples() {
        let z = AgentState::zeros(3, 2);
        let mut e = vec![0.0; 12];
        e[0] = 1.0;
        assert_eq!(eval_state_basis(&z).unwrap().as_slice(), e.as_slice());

        let x = AgentState::from_vec(3, 2, vec![2.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let v = eval_state_basis(&x).unwrap();
        assert_eq!(
            v.as_slice(),
            &[1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 4.0, 0.0, 0.0, 0.0, 0.0]
        );

        let ones = AgentState::from_vec(3, 2, vec![1.0; 6]).unwrap();
        assert_eq!(eval_state_basis(&ones).unwrap().as_slice(), &[1.0; 12]);

        assert!(eval_state_basis(&AgentState::zeros(2, 2)).is_err());
    }

    #[test]
    fn disturbance_basis_examples() {
        let v = eval_disturbance_basis(0.0);
        assert_eq!(
            v.as_slice(),
            &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]
        );
        let far = eval_disturbance_basis(60.0);
        assert!(far[10] < 1e-20 && far[11] < 1e-20);
        for t in [0.3, 1.7, 12.0] {
            let v = eval_disturbance_basis(t);
            assert!((v[7] + v[8] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn estimate_examples() {
        let w = DMatrix::zeros(3, 2);
        let phi = DVector::from_element(3, 1.0);
        assert_eq!(estimate(&w, &phi).unwrap(), DVector::zeros(2));
        let mut w = DMatrix::zeros(3, 2);
        w[(0, 0)] = 1.0;
        assert_eq!(estimate(&w, &phi).unwrap()[0], 1.0);
        assert!(estimate(&w, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn tuning_examples() {
        let b = bank1(1.0, 1.0);
        let one = DVector::from_element(1, 1.0);
        let zero = DVector::zeros(1);
        let d = tuning_derivatives(&b, &one, &one, &one, &zero, 1.0, 2.0).unwrap();
        assert_eq!(d.theta[(0, 0)], 0.0);

        let mut b = bank1(2.0, 0.5);
        b.theta_hat[(0, 0)] = 3.0;
        let d = tuning_derivatives(&b, &one, &one, &one, &zero, 1.0, 2.0).unwrap();
        assert_eq!(d.theta[(0, 0)], -2.0 * 0.5 * 3.0);

        // scalar case with no leakage
        let mut b = bank1(1.0, 1.0);
        b.state_gain.kappa = 0.0;
        b.leader_gain.kappa = 0.0;
        b.disturbance_gain.kappa = 0.0;
        let d = tuning_derivatives(&b, &one, &one, &one, &one, 1.0, 2.0).unwrap();
        assert_eq!(d.theta[(0, 0)], -2.0);
        assert_eq!(d.theta0[(0, 0)], 2.0);
        assert_eq!(d.thetaw[(0, 0)], -2.0);
    }

    #[test]
    fn gains_must_be_spd() {
        let mut g = DMatrix::identity(2, 2);
        g[(0, 1)] = 3.0;
        assert!(TuningGain::new(g, 0.1).is_err());
        assert!(TuningGain::new(DMatrix::identity(2, 2), 0.0).is_err());
        assert!(TuningGain::new(-DMatrix::<f64>::identity(2, 2), 0.1).is_err());
    }

    #[test]
    fn leakage_decay_bound() {
        // Integrate the r = 0 law with RK4 and compare to the exponential bound.
        let gain = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let kappa = 0.3;
        let tg = TuningGain::new(gain.clone(), kappa).unwrap();
        let mut b = NNBank::new(1, tg.clone(), tg.clone(), tg);
        b.theta_hat = DMatrix::from_column_slice(2, 1, &[1.0, -2.0]);
        let phi = DVector::zeros(2);
        let r = DVector::zeros(1);
        let rate = linalg::sym_eigen_extremes(&(&gain * kappa)).0;
        let n0 = b.theta_hat.norm();
        let h = 0.01;
        let f = |w: &DMatrix<f64>| {
            let mut bb = b.clone();
            bb.theta_hat = w.clone();
            tuning_derivatives(&bb, &phi, &phi, &phi, &r, 1.0, 1.0).unwrap().theta
        };
        let mut w = b.theta_hat.clone();
        for k in 1..=500 {
            let k1 = f(&w);
            let k2 = f(&(&w + &k1 * (h / 2.0)));
            let k3 = f(&(&w + &k2 * (h / 2.0)));
            let k4 = f(&(&w + &k3 * h));
            w += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            let t = k as f64 * h;
            assert!(w.norm() <= n0 * (-rate * t).exp() * (1.0 + 1e-6));
        }
    }

    proptest! {
        #[test]
        fn tuning_is_linear(
            r1 in prop::collection::vec(-5.0..5.0f64, 2),
            r2 in prop::collection::vec(-5.0..5.0f64, 2),
            phi in prop::collection::vec(-5.0..5.0f64, 3),
            a in -3.0..3.0f64,
        ) {
            let tg = || TuningGain::scaled_identity(3, 1.5, 0.2).unwrap();
            let b = NNBank::new(2, tg(), tg(), tg());
            let phi = DVector::from_vec(phi);
            let (r1, r2) = (DVector::from_vec(r1), DVector::from_vec(r2));
            let d = |r: &DVector<f64>| tuning_derivatives(&b, &phi, &phi, &phi, r, 0.7, 2.0).unwrap();
            let lhs = d(&(&r1 * a + &r2));
            let rhs_theta = d(&r1).theta * a + d(&r2).theta;
            let rhs_theta0 = d(&r1).theta0 * a + d(&r2).theta0;
            prop_assert!((lhs.theta - rhs_theta).abs().max() < 1e-10);
            prop_assert!((lhs.theta0 - rhs_theta0).abs().max() < 1e-10);
        }

        #[test]
        fn leakage_is_linear_in_weights(
            w in prop::collection::vec(-5.0..5.0f64, 6),
            a in -3.0..3.0f64,
        ) {
            let tg = || TuningGain::scaled_identity(3, 2.0, 0.4).unwrap();
            let mut b = NNBank::new(2, tg(), tg(), tg());
            let zero_phi = DVector::zeros(3);
            let zero_r = DVector::zeros(2);
            b.theta_hat = DMatrix::from_vec(3, 2, w);
            let base = tuning_derivatives(&b, &zero_phi, &zero_phi, &zero_phi, &zero_r, 1.0, 1.0).unwrap();
            b.theta_hat *= a;
            let scaled = tuning_derivatives(&b, &zero_phi, &zero_phi, &zero_phi, &zero_r, 1.0, 1.0).unwrap();
            prop_assert!((scaled.theta - base.theta * a).abs().max() < 1e-10);
        }

        #[test]
        fn estimate_is_bilinear(
            w in prop::collection::vec(-5.0..5.0f64, 6),
            phi in prop::collection::vec(-5.0..5.0f64, 3),
            a in -3.0..3.0f64,
        ) {
            let w = DMatrix::from_vec(3, 2, w);
            let phi = DVector::from_vec(phi);
            let base = estimate(&w, &phi).unwrap();
            prop_assert!((estimate(&(&w * a), &phi).unwrap() - &base * a).abs().max() < 1e-10);
            // naive loop oracle
            for d in 0..2 {
                let naive: f64 = (0..3).map(|k| w[(k, d)] * phi[k]).sum();
                prop_assert!((base[d] - naive).abs() < 1e-12);
            }
        }
    }
}
