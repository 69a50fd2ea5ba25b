//! Complex potential of a cluster: uniform flow along the cluster heading with
//! a doublet per excluded agent, so that each excluded agent sits inside a
//! closed stream surface (a "cylinder" in the plane).
//!
//! For a heading `theta`, flag `beta` and singularities `(c_h, r_h)` the
//! potential at `z` is
//!
//! ```text
//! f(z) = (1 - beta) * z e^{-j theta}
//!      + beta * sum_h [ (z - c_h) e^{-j theta} + r_h^2 / ((z - c_h) e^{-j theta}) ]
//! ```
//!
//! Its real part is the potential `phi`, its imaginary part the stream
//! function `psi`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Distance to a singularity center below which evaluation is refused.
pub const SINGULAR_TOLERANCE: f64 = 1e-9;
/// Slack applied to the disk-membership test; boundary points are exterior.
pub const DISK_SLACK: f64 = 1e-12;
/// Complex residual `|f(z) - target|` accepted by [`FlowField::invert`].
pub const INVERSION_TOLERANCE: f64 = 1e-10;
pub const MAX_NEWTON_ITERATIONS: usize = 100;
pub const MAX_STEP_HALVINGS: usize = 8;
/// Offset along the local tangent used when Newton is restarted.
pub const RESTART_OFFSET: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("singularity radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("singularity center must be finite")]
    NonFiniteCenter,
    #[error("heading must be finite, got {0}")]
    NonFiniteHeading(f64),
    #[error("point {z} coincides with the center of singularity {index}")]
    SingularPoint { index: usize, z: Complex64 },
    #[error("inversion did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        last: Complex64,
    },
    #[error("the only root reachable from the guess lies inside cylinder {index}")]
    RootInsideCylinder { index: usize },
}

/// An excluded agent: a doublet centered at `center` whose zero streamline
/// is the circle of radius `radius` (when it is alone in the field).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Singularity {
    center: Complex64,
    radius: f64,
}

impl Singularity {
    pub fn new(center: Complex64, radius: f64) -> Result<Self, FlowError> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(FlowError::InvalidRadius(radius));
        }
        if !(center.re.is_finite() && center.im.is_finite()) {
            return Err(FlowError::NonFiniteCenter);
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> Complex64 {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Strictly inside the disk, with [`DISK_SLACK`] of tolerance at the rim.
    pub fn contains(&self, z: Complex64) -> bool {
        (z - self.center).norm() < self.radius - DISK_SLACK
    }

    /// Signed distance from the rim, negative inside.
    pub fn clearance(&self, z: Complex64) -> f64 {
        (z - self.center).norm() - self.radius
    }
}

/// Potential and stream values at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialStreamPair {
    pub phi: f64,
    pub psi: f64,
}

impl PotentialStreamPair {
    pub fn new(phi: f64, psi: f64) -> Self {
        Self { phi, psi }
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.phi, self.psi)
    }
}

impl From<Complex64> for PotentialStreamPair {
    fn from(value: Complex64) -> Self {
        Self {
            phi: value.re,
            psi: value.im,
        }
    }
}

/// Immutable description of one cluster's flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    theta: f64,
    beta: bool,
    singularities: Vec<Singularity>,
    // e^{-j theta}
    rotation: Complex64,
}

impl FlowField {
    pub fn new(theta: f64, beta: bool, singularities: Vec<Singularity>) -> Result<Self, FlowError> {
        if !theta.is_finite() {
            return Err(FlowError::NonFiniteHeading(theta));
        }
        for (i, a) in singularities.iter().enumerate() {
            for (j, b) in singularities.iter().enumerate().skip(i + 1) {
                if (a.center - b.center).norm() < a.radius + b.radius {
                    log::warn!("cylinders {i} and {j} overlap; boundaries are only approximate");
                }
            }
        }
        Ok(Self {
            theta,
            beta,
            singularities,
            rotation: Complex64::from_polar(1.0, -theta),
        })
    }

    /// Uniform flow along `theta` with no exclusions.
    pub fn uniform(theta: f64) -> Result<Self, FlowError> {
        Self::new(theta, false, Vec::new())
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn beta(&self) -> bool {
        self.beta
    }

    /// `beta` as used for evaluation: with no singularities the doublet sum
    /// is identically zero, so the field falls back to uniform flow.
    pub fn effective_beta(&self) -> bool {
        self.beta && !self.singularities.is_empty()
    }

    pub fn singularities(&self) -> &[Singularity] {
        &self.singularities
    }

    /// Singularities that shape the flow (empty when the effective beta is 0).
    pub fn active_singularities(&self) -> &[Singularity] {
        if self.effective_beta() {
            &self.singularities
        } else {
            &[]
        }
    }

    /// Index of the first active cylinder strictly containing `z`, if any.
    pub fn inside_cylinder(&self, z: Complex64) -> Option<usize> {
        self.active_singularities()
            .iter()
            .position(|s| s.contains(z))
    }

    /// Smallest signed clearance to an active cylinder, `None` when there is none.
    pub fn min_clearance(&self, z: Complex64) -> Option<f64> {
        self.active_singularities()
            .iter()
            .map(|s| s.clearance(z))
            .min_by(f64::total_cmp)
    }

    fn check_regular(&self, z: Complex64) -> Result<(), FlowError> {
        match self
            .active_singularities()
            .iter()
            .position(|s| (z - s.center).norm() <= SINGULAR_TOLERANCE)
        {
            Some(index) => Err(FlowError::SingularPoint { index, z }),
            None => Ok(()),
        }
    }

    /// Complex potential `phi + j psi` at `z`.
    pub fn potential(&self, z: Complex64) -> Result<Complex64, FlowError> {
        self.check_regular(z)?;
        if !self.effective_beta() {
            return Ok(z * self.rotation);
        }
        Ok(self
            .singularities
            .iter()
            .map(|s| {
                let w = (z - s.center) * self.rotation;
                w + s.radius * s.radius / w
            })
            .sum())
    }

    pub fn eval(&self, z: Complex64) -> Result<PotentialStreamPair, FlowError> {
        self.potential(z).map(PotentialStreamPair::from)
    }

    /// Analytic `df/dz`.
    pub fn eval_derivative(&self, z: Complex64) -> Result<Complex64, FlowError> {
        self.check_regular(z)?;
        Ok(self.derivative_unchecked(z))
    }

    fn derivative_unchecked(&self, z: Complex64) -> Complex64 {
        if !self.effective_beta() {
            return self.rotation;
        }
        let sum: Complex64 = self
            .singularities
            .iter()
            .map(|s| {
                let w = (z - s.center) * self.rotation;
                Complex64::new(1.0, 0.0) - s.radius * s.radius / (w * w)
            })
            .sum();
        self.rotation * sum
    }

    /// Find `z` with `f(z) = target`, starting from `guess`.
    ///
    /// Damped Newton: a full step is halved up to [`MAX_STEP_HALVINGS`] times
    /// until the residual decreases and the iterate stays outside every
    /// cylinder. On failure the iteration is restarted once from `guess`
    /// nudged by [`RESTART_OFFSET`] along the local tangent.
    pub fn invert(
        &self,
        target: PotentialStreamPair,
        guess: Complex64,
    ) -> Result<Complex64, FlowError> {
        let target = target.to_complex();
        if !self.effective_beta() {
            // Rotation is an isometry; invert it directly.
            return Ok(target / self.rotation);
        }
        self.check_regular(guess)?;
        if let Some(index) = self.inside_cylinder(guess) {
            return Err(FlowError::RootInsideCylinder { index });
        }
        match self.newton(target, guess) {
            Ok(z) => Ok(z),
            Err(first) => {
                let df = self.derivative_unchecked(guess);
                if df.norm() <= f64::MIN_POSITIVE {
                    return Err(first);
                }
                let restart = guess + df.conj() / df.norm() * RESTART_OFFSET;
                if self.inside_cylinder(restart).is_some() || self.check_regular(restart).is_err() {
                    return Err(first);
                }
                self.newton(target, restart).map_err(|_| first)
            }
        }
    }

    fn newton(&self, target: Complex64, start: Complex64) -> Result<Complex64, FlowError> {
        let mut z = start;
        let mut residual = self.potential(z)? - target;
        let mut blocked_by = None;

        for iteration in 0..MAX_NEWTON_ITERATIONS {
            let res = residual.norm();
            if res == 0.0 {
                return Ok(z);
            }
            let df = self.derivative_unchecked(z);
            let step = -residual / df;
            if !(step.re.is_finite() && step.im.is_finite()) {
                return self.finish(z, res, iteration, blocked_by);
            }

            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..=MAX_STEP_HALVINGS {
                let candidate = z + step * lambda;
                if let Some(index) = self.inside_cylinder(candidate) {
                    blocked_by = Some(index);
                } else if let Ok(value) = self.potential(candidate) {
                    let r = value - target;
                    if r.norm() < res {
                        accepted = Some((candidate, r));
                        break;
                    }
                }
                lambda *= 0.5;
            }

            match accepted {
                Some((next, r)) => {
                    z = next;
                    residual = r;
                }
                // No admissible decrease: either already at machine precision
                // or stuck.
                None => return self.finish(z, res, iteration, blocked_by),
            }
        }
        self.finish(z, residual.norm(), MAX_NEWTON_ITERATIONS, blocked_by)
    }

    fn finish(
        &self,
        z: Complex64,
        residual: f64,
        iterations: usize,
        blocked_by: Option<usize>,
    ) -> Result<Complex64, FlowError> {
        if residual <= INVERSION_TOLERANCE {
            Ok(z)
        } else if let Some(index) = blocked_by {
            Err(FlowError::RootInsideCylinder { index })
        } else {
            Err(FlowError::NoConvergence {
                iterations,
                residual,
                last: z,
            })
        }
    }
}

#[cfg(test)]
// Reference values are kept at the precision they were computed to.
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_4;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn unit_cylinder() -> FlowField {
        FlowField::new(0.0, true, vec![Singularity::new(c(0.0, 0.0), 1.0).unwrap()]).unwrap()
    }

    #[test]
    fn identity_when_inactive() {
        let field = FlowField::uniform(0.0).unwrap();
        let p = field.eval(c(1.0, 2.0)).unwrap();
        assert_eq!(p, PotentialStreamPair::new(1.0, 2.0));
        assert_eq!(field.eval_derivative(c(-3.0, 7.0)).unwrap(), c(1.0, 0.0));
    }

    #[test]
    fn single_cylinder_values() {
        let field = unit_cylinder();
        let p = field.eval(c(2.0, 0.0)).unwrap();
        assert_abs_diff_eq!(p.phi, 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.psi, 0.0, epsilon = 1e-15);

        let p = field.eval(c(0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(p.phi, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.psi, 0.0, epsilon = 1e-15);

        assert_abs_diff_eq!(
            field.eval_derivative(c(2.0, 0.0)).unwrap().re,
            0.75,
            epsilon = 1e-15
        );
        let d = field.eval_derivative(c(0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(d.re, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.im, 0.0, epsilon = 1e-15);
    }

    // Reference values from a 40-digit evaluation of the potential.
    #[test]
    fn rotated_field_matches_high_precision_reference() {
        let field = FlowField::new(
            FRAC_PI_4,
            true,
            vec![Singularity::new(c(1.0, 0.0), 0.4).unwrap()],
        )
        .unwrap();
        let p = field.eval(c(2.0, 1.0)).unwrap();
        assert_abs_diff_eq!(p.phi, 1.527_350_647_362_942_7, epsilon = 1e-14);
        assert_abs_diff_eq!(p.psi, 0.0, epsilon = 1e-14);
        let p = field.eval(c(2.0, 1.5)).unwrap();
        assert_abs_diff_eq!(p.phi, 1.854_795_479_881_636_2, epsilon = 1e-14);
        assert_abs_diff_eq!(p.psi, 0.336_147_685_210_220_28, epsilon = 1e-14);
    }

    #[test]
    fn two_singularities_match_high_precision_reference() {
        let field = FlowField::new(
            0.7,
            true,
            vec![
                Singularity::new(c(0.5, 1.0), 0.4).unwrap(),
                Singularity::new(c(-1.5, 3.0), 0.25).unwrap(),
            ],
        )
        .unwrap();
        let z = c(-0.7, 2.2);
        let p = field.eval(z).unwrap();
        assert_abs_diff_eq!(p.phi, -0.051_579_538_822_094_085, epsilon = 1e-14);
        assert_abs_diff_eq!(p.psi, 0.524_728_026_189_249_13, epsilon = 1e-14);
        let d = field.eval_derivative(z).unwrap();
        assert_abs_diff_eq!(d.re, 1.596_930_187_841_834_8, epsilon = 1e-14);
        assert_abs_diff_eq!(d.im, -1.368_272_417_028_298_5, epsilon = 1e-14);
    }

    #[test]
    fn singular_point_is_rejected() {
        let field = unit_cylinder();
        assert!(matches!(
            field.eval(c(0.0, 5e-10)),
            Err(FlowError::SingularPoint { index: 0, .. })
        ));
        assert!(field.eval_derivative(c(0.0, 0.0)).is_err());
        // Inside but away from the center is still defined, and flagged.
        assert!(field.eval(c(0.5, 0.0)).is_ok());
        assert_eq!(field.inside_cylinder(c(0.5, 0.0)), Some(0));
        assert_eq!(field.inside_cylinder(c(0.0, 1.0)), None);
    }

    #[test]
    fn empty_singularity_set_behaves_as_uniform_flow() {
        let field = FlowField::new(0.3, true, Vec::new()).unwrap();
        assert!(!field.effective_beta());
        let z = c(1.0, -2.0);
        let expected = z * Complex64::from_polar(1.0, -0.3);
        let p = field.eval(z).unwrap();
        assert_abs_diff_eq!(p.phi, expected.re, epsilon = 1e-15);
        assert_abs_diff_eq!(p.psi, expected.im, epsilon = 1e-15);
    }

    #[test]
    fn invalid_construction() {
        assert_eq!(
            Singularity::new(c(0.0, 0.0), 0.0),
            Err(FlowError::InvalidRadius(0.0))
        );
        assert!(Singularity::new(c(f64::NAN, 0.0), 1.0).is_err());
        assert!(FlowField::uniform(f64::INFINITY).is_err());
    }

    #[test]
    fn invert_identity() {
        let field = FlowField::uniform(0.0).unwrap();
        let z = field
            .invert(PotentialStreamPair::new(1.0, 2.0), c(0.0, 0.0))
            .unwrap();
        assert_abs_diff_eq!(z.re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(z.im, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn invert_picks_exterior_root() {
        let field = unit_cylinder();
        // Both 2 and 0.5 map to 2.5; 0.5 is inside the cylinder.
        assert_abs_diff_eq!(field.eval(c(0.5, 0.0)).unwrap().phi, 2.5, epsilon = 1e-15);
        let z = field
            .invert(PotentialStreamPair::new(2.5, 0.0), c(1.9, 0.0))
            .unwrap();
        assert_abs_diff_eq!(z.re, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn invert_rejects_guess_inside_cylinder() {
        let field = unit_cylinder();
        assert!(matches!(
            field.invert(PotentialStreamPair::new(2.5, 0.0), c(0.5, 0.1)),
            Err(FlowError::RootInsideCylinder { index: 0 })
        ));
    }

    #[test]
    fn boundary_is_a_streamline_for_a_lone_cylinder() {
        let center = c(0.7, -1.2);
        let field =
            FlowField::new(0.0, true, vec![Singularity::new(center, 0.4).unwrap()]).unwrap();
        let reference = field.eval(center + 0.4).unwrap().psi;
        for k in 0..32 {
            let angle = k as f64 * std::f64::consts::TAU / 32.0;
            let z = center + Complex64::from_polar(0.4, angle);
            assert_abs_diff_eq!(field.eval(z).unwrap().psi, reference, epsilon = 1e-12);
        }
    }
}
