//! Residual-sum-of-squares confidence ball around the Lepski-selected centre.
//!
//! The defining inequality is implicit, because the constant `z̄` contains the
//! candidate's own distance `(p/256)‖M − M̃‖²`. Using `p/n = 1/(m1 m2)` that term
//! moves to the left-hand side and the set becomes the explicit ball
//!
//! ```text
//! ‖M − M̃‖²/(m1 m2) ≤ 256 ( r̂ + (a² z d k* + z (U C*)² d k*)/n + ξ_{α,U}/√n )
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::linalg::{frob_dist_sq, Matrix};
use crate::model::{ModelParams, Observation};
use crate::selection::Selection;

/// Lower bound on `z` coming from the noise cross-term.
pub const PAPER_Z_FLOOR: f64 = 6240.0;
/// Smallest admissible value of the spectral-norm constant `C*`.
pub const C_STAR_MIN: f64 = 2.0;
/// Factor in front of the bracket after resolving the implicit inequality.
pub const RADIUS_FACTOR: f64 = 256.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Conservative universal constants.
    Paper,
    /// `z` replaced by an empirically calibrated `z_cal`.
    Calibrated,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Paper => "paper",
            Mode::Calibrated => "calibrated",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Mode::Paper),
            "calibrated" => Ok(Mode::Calibrated),
            other => Err(param_err(format!(
                "unknown mode `{other}` (expected `paper` or `calibrated`)"
            ))),
        }
    }
}

/// Smallest `z` allowed in paper mode for a given `C*`.
pub fn paper_z_min(c_star: f64) -> f64 {
    (27.0 * c_star).powi(2).max(PAPER_Z_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfSetConstants {
    pub z: f64,
    pub c_star: f64,
    pub alpha: f64,
    pub mode: Mode,
    pub z_cal: f64,
}

impl ConfSetConstants {
    /// Paper mode with `C* = 2` and the smallest admissible `z`.
    pub fn paper(alpha: f64) -> Result<Self> {
        let c = Self {
            z: paper_z_min(C_STAR_MIN),
            c_star: C_STAR_MIN,
            alpha,
            mode: Mode::Paper,
            z_cal: 0.0,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn calibrated(alpha: f64, z_cal: f64) -> Result<Self> {
        let c = Self {
            mode: Mode::Calibrated,
            z_cal,
            ..Self::paper(alpha)?
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_mode(self, mode: Mode) -> Self {
        Self { mode, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(param_err(format!("alpha = {} must lie in (0, 1)", self.alpha)));
        }
        if !(self.c_star >= C_STAR_MIN && self.c_star.is_finite()) {
            return Err(param_err(format!("C* = {} must be at least 2", self.c_star)));
        }
        if self.mode == Mode::Paper && (self.z.is_nan() || self.z < paper_z_min(self.c_star)) {
            return Err(param_err(format!(
                "paper mode requires z >= {} but z = {}",
                paper_z_min(self.c_star),
                self.z
            )));
        }
        if !(self.z_cal >= 0.0 && self.z_cal.is_finite()) {
            return Err(param_err(format!("z_cal = {} must be nonnegative", self.z_cal)));
        }
        Ok(())
    }

    /// The `z` that enters the radius in the current mode.
    pub fn effective_z(&self) -> f64 {
        match self.mode {
            Mode::Paper => self.z,
            Mode::Calibrated => self.z_cal,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceSet {
    pub center: Matrix,
    pub k_star: usize,
    /// Squared radius of the ball in `‖·‖²_F / (m1 m2)` units.
    pub rho_sq: f64,
    pub constants: ConfSetConstants,
    pub r_hat: f64,
}

/// Serialisable summary of a [`ConfidenceSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSetRecord {
    pub m1: usize,
    pub m2: usize,
    pub k_star: usize,
    pub rho_sq: f64,
    pub diameter_sq: f64,
    pub r_hat: f64,
    pub constants: ConfSetConstants,
    /// Row-major centre, present only when requested.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub center: Option<Vec<Vec<f64>>>,
}

impl ConfidenceSet {
    /// `‖M − M̃‖²_F / (m1 m2) ≤ ρ²`.
    pub fn contains(&self, m: &Matrix) -> Result<bool> {
        Ok(self.normalized_distance_sq(m)? <= self.rho_sq)
    }

    pub fn normalized_distance_sq(&self, m: &Matrix) -> Result<f64> {
        if m.shape() != self.center.shape() {
            return Err(param_err(format!(
                "matrix is {:?} but the set lives in {:?}",
                m.shape(),
                self.center.shape()
            )));
        }
        Ok(frob_dist_sq(m, &self.center) / self.center.len() as f64)
    }

    /// Squared normalised Frobenius diameter of the ball.
    pub fn diameter_sq(&self) -> f64 {
        4.0 * self.rho_sq
    }

    pub fn to_record(&self, include_center: bool) -> ConfidenceSetRecord {
        let (m1, m2) = self.center.shape();
        ConfidenceSetRecord {
            m1,
            m2,
            k_star: self.k_star,
            rho_sq: self.rho_sq,
            diameter_sq: self.diameter_sq(),
            r_hat: self.r_hat,
            constants: self.constants,
            center: include_center.then(|| {
                (0..m1)
                    .map(|i| self.center.row(i).iter().copied().collect())
                    .collect()
            }),
        }
    }
}

/// `r̂ = (1/n) Σ_ij (Y_ij − B_ij M̃_ij)² − σ²`; note the divisor is the budget `n`.
pub fn residual_stat(obs: &Observation, center: &Matrix, sigma: f64, n: usize) -> Result<f64> {
    if center.shape() != obs.shape() {
        return Err(param_err(format!(
            "center is {:?} but observation is {:?}",
            center.shape(),
            obs.shape()
        )));
    }
    if n == 0 {
        return Err(param_err("budget n must be positive"));
    }
    let mut sum = 0.0;
    for ((&y, &c), &b) in obs.values.iter().zip(center.iter()).zip(obs.mask.iter()) {
        if b {
            sum += (y - c) * (y - c);
        }
    }
    Ok(sum / n as f64 - sigma * sigma)
}

/// `ξ_{α,U} = 2U²√log(1/α) + 4U² log(1/α) / (3√n)`.
pub fn xi_alpha(alpha: f64, u: f64, n: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(param_err(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    if !(u >= 0.0 && u.is_finite()) {
        return Err(param_err(format!("U = {u} must be nonnegative")));
    }
    if n == 0 {
        return Err(param_err("budget n must be positive"));
    }
    let log_inv = -alpha.ln();
    let u2 = u * u;
    Ok(2.0 * u2 * log_inv.sqrt() + 4.0 * u2 * log_inv / (3.0 * (n as f64).sqrt()))
}

/// The bracket `r̂ + (a² z d k* + z (U C*)² d k*)/n + ξ/√n`, before the factor 256.
pub fn radius_bracket(
    r_hat: f64,
    k_star: usize,
    params: &ModelParams,
    consts: &ConfSetConstants,
) -> Result<f64> {
    params.validate()?;
    consts.validate()?;
    let z = consts.effective_z();
    let n = params.n as f64;
    let dk = (params.d() * k_star) as f64;
    let uc = params.u * consts.c_star;
    let xi = xi_alpha(consts.alpha, params.u, params.n)?;
    Ok(r_hat + (params.a * params.a * z * dk + z * uc * uc * dk) / n + xi / n.sqrt())
}

/// Squared normalised radius, floored at zero.
pub fn radius_sq(
    r_hat: f64,
    k_star: usize,
    params: &ModelParams,
    consts: &ConfSetConstants,
) -> Result<f64> {
    Ok((RADIUS_FACTOR * radius_bracket(r_hat, k_star, params, consts)?).max(0.0))
}

pub fn build_confset(
    obs: &Observation,
    sel: &Selection,
    params: &ModelParams,
    consts: &ConfSetConstants,
) -> Result<ConfidenceSet> {
    let r_hat = residual_stat(obs, &sel.center, params.sigma, params.n)?;
    let rho_sq = radius_sq(r_hat, sel.k_star, params, consts)?;
    Ok(ConfidenceSet {
        center: sel.center.clone(),
        k_star: sel.k_star,
        rho_sq,
        constants: *consts,
        r_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gen_low_rank, sample_observation, NoiseSpec};
    use approx::assert_relative_eq;

    fn params() -> ModelParams {
        ModelParams::new(10, 12, 60, 1.0, 0.3, 0.3).unwrap()
    }

    #[test]
    fn xi_examples() {
        let e_inv = (-1.0f64).exp();
        assert_relative_eq!(xi_alpha(e_inv, 1.0, 9).unwrap(), 2.0 + 4.0 / 9.0, max_relative = 1e-14);
        assert!(xi_alpha(1.0 - 1e-15, 1.0, 9).unwrap() < 1e-6);
        let base = xi_alpha(0.05, 0.5, 100).unwrap();
        assert_relative_eq!(xi_alpha(0.05, 2.0, 100).unwrap(), 16.0 * base, max_relative = 1e-14);
        assert!(xi_alpha(1.0, 1.0, 9).is_err());
        assert!(xi_alpha(0.0, 1.0, 9).is_err());
        assert!(xi_alpha(-0.5, 1.0, 9).is_err());
    }

    #[test]
    fn paper_constants() {
        let c = ConfSetConstants::paper(0.1).unwrap();
        assert_eq!(c.z, 6240.0);
        assert_eq!(paper_z_min(3.0), 6561.0);
        let too_small = ConfSetConstants { z: 100.0, ..c };
        assert!(too_small.validate().is_err());
        let bad_c = ConfSetConstants { c_star: 1.0, ..c };
        assert!(bad_c.validate().is_err());
        assert!(ConfSetConstants::calibrated(0.1, -1.0).is_err());
    }

    #[test]
    fn radius_reduces_to_residual_when_constants_vanish() {
        let c = ConfSetConstants::calibrated(1.0 - 1e-15, 0.0).unwrap();
        let r = radius_sq(0.75, 3, &params(), &c).unwrap();
        assert_relative_eq!(r, 256.0 * 0.75, max_relative = 1e-8);
    }

    #[test]
    fn radius_floored_at_zero() {
        let c = ConfSetConstants::calibrated(0.5, 0.0).unwrap();
        assert_eq!(radius_sq(-10.0, 1, &params(), &c).unwrap(), 0.0);
    }

    #[test]
    fn radius_increases_with_rank() {
        for c in [
            ConfSetConstants::paper(0.1).unwrap(),
            ConfSetConstants::calibrated(0.1, 0.01).unwrap(),
        ] {
            let rs: Vec<f64> = (1..6).map(|k| radius_sq(0.01, k, &params(), &c).unwrap()).collect();
            assert!(rs.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn paper_radius_exceeds_calibrated() {
        let p = ConfSetConstants::paper(0.1).unwrap();
        let c = ConfSetConstants::calibrated(0.1, 1.0).unwrap();
        assert!(radius_sq(0.02, 2, &params(), &p).unwrap() > radius_sq(0.02, 2, &params(), &c).unwrap());
    }

    #[test]
    fn residual_stat_examples() {
        let truth = gen_low_rank(6, 5, 2, 1.0, 3).unwrap();
        let quiet = NoiseSpec::rademacher(0.0);
        let p = ModelParams::with_noise(6, 5, 15, 1.0, &quiet).unwrap();
        let obs = sample_observation(&truth, &p, &quiet, 4).unwrap();
        assert_eq!(residual_stat(&obs, &truth.matrix, 0.0, p.n).unwrap(), 0.0);

        let loud = NoiseSpec::rademacher(0.4);
        let p = ModelParams::with_noise(6, 5, 30, 1.0, &loud).unwrap();
        let obs = sample_observation(&truth, &p, &loud, 4).unwrap();
        assert!(residual_stat(&obs, &truth.matrix, 0.4, p.n).unwrap().abs() < 1e-15);
    }

    #[test]
    fn membership_and_diameter() {
        let center = Matrix::from_element(3, 4, 0.5);
        let set = ConfidenceSet {
            center: center.clone(),
            k_star: 1,
            rho_sq: 0.0,
            constants: ConfSetConstants::paper(0.1).unwrap(),
            r_hat: 0.0,
        };
        assert!(set.contains(&center).unwrap());
        let mut other = center.clone();
        other[(0, 0)] += 1e-12;
        assert!(!set.contains(&other).unwrap());
        assert!(set.contains(&Matrix::zeros(4, 3)).is_err());
        assert_eq!(set.diameter_sq(), 0.0);
        let unit = ConfidenceSet { rho_sq: 1.0, ..set.clone() };
        assert_eq!(unit.diameter_sq(), 4.0);
        let scaled = ConfidenceSet { rho_sq: 2.5, ..set };
        assert_eq!(scaled.diameter_sq(), 2.5 * unit.diameter_sq());
    }

    #[test]
    fn record_center_toggle() {
        let set = ConfidenceSet {
            center: Matrix::from_fn(2, 3, |i, j| (i * 3 + j) as f64),
            k_star: 1,
            rho_sq: 0.25,
            constants: ConfSetConstants::paper(0.1).unwrap(),
            r_hat: 0.01,
        };
        assert!(set.to_record(false).center.is_none());
        let rec = set.to_record(true);
        assert_eq!(rec.center.as_ref().unwrap()[1], vec![3.0, 4.0, 5.0]);
        assert_eq!(rec.diameter_sq, 1.0);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("paper".parse::<Mode>().unwrap(), Mode::Paper);
        assert_eq!("calibrated".parse::<Mode>().unwrap(), Mode::Calibrated);
        assert!("other".parse::<Mode>().is_err());
    }
}
