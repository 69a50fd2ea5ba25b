//! Moving an agent along its streamline.
//!
//! [`streamline_step`] is the primary stepper: it advances the potential by
//! `speed * dt` at constant stream value and maps the result back to the
//! plane by Newton inversion. [`rk4_step`] integrates the equivalent ODE
//! `dz/dt = speed / f'(z)` and serves both as a fallback and as an
//! independent cross-check.

use num_complex::Complex64;
use thiserror::Error;

use crate::flow_field::{FlowError, FlowField, PotentialStreamPair};

/// `|f'(z)|` at or below this is treated as a stagnation point.
pub const STAGNATION_THRESHOLD: f64 = 1e-10;

/// Finest subdivision of the potential advance tried before giving up on
/// inversion: near a stagnation point one step can carry an agent around a
/// corner that Newton cannot cut from the starting point.
pub const MAX_CONTINUATION_SUBSTEPS: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),
    #[error("speed must be non-negative and finite, got {0}")]
    InvalidSpeed(f64),
    #[error("stagnation point at {z} (|df/dz| = {gradient:e})")]
    StagnationPoint { z: Complex64, gradient: f64 },
    #[error(transparent)]
    Flow(#[from] FlowError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    dt: f64,
    speed: f64,
}

impl StepParams {
    pub fn new(dt: f64, speed: f64) -> Result<Self, KinematicsError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(KinematicsError::InvalidTimeStep(dt));
        }
        if !(speed.is_finite() && speed >= 0.0) {
            return Err(KinematicsError::InvalidSpeed(speed));
        }
        Ok(Self { dt, speed })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    /// Potential advance per step.
    pub fn advance(&self) -> f64 {
        self.speed * self.dt
    }
}

/// Unit direction of the sliding path, `(dpsi/dy, -dpsi/dx)` normalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentVector {
    /// Encoded as `x + j y`.
    pub direction: Complex64,
    pub raw_gradient_norm: f64,
}

pub fn tangent(z: Complex64, field: &FlowField) -> Result<TangentVector, KinematicsError> {
    let df = field.eval_derivative(z)?;
    // (dpsi/dy, -dpsi/dx) = (Re f', -Im f') = conj(f')
    let norm = df.norm();
    if norm <= STAGNATION_THRESHOLD {
        return Err(KinematicsError::StagnationPoint { z, gradient: norm });
    }
    Ok(TangentVector {
        direction: df.conj() / norm,
        raw_gradient_norm: norm,
    })
}

/// Desired velocity `speed * T` as `vx + j vy`.
pub fn desired_velocity(
    z: Complex64,
    field: &FlowField,
    speed: f64,
) -> Result<Complex64, KinematicsError> {
    Ok(tangent(z, field)?.direction * speed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMethod {
    Inversion,
    /// Newton failed; one RK4 step was taken instead.
    Rk4Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub position: Complex64,
    pub method: StepMethod,
}

pub fn streamline_step(
    z: Complex64,
    field: &FlowField,
    params: StepParams,
) -> Result<Step, KinematicsError> {
    streamline_step_with_offset(z, field, params, 0.0)
}

/// As [`streamline_step`], but the target stream value is shifted by
/// `psi_offset`. Used to move an agent off a dividing streamline.
pub fn streamline_step_with_offset(
    z: Complex64,
    field: &FlowField,
    params: StepParams,
    psi_offset: f64,
) -> Result<Step, KinematicsError> {
    let current = field.eval(z)?;
    let psi = current.psi + psi_offset;
    let target = PotentialStreamPair::new(current.phi + params.advance(), psi);
    let inverted = field.invert(target, z).or_else(|err| match err {
        FlowError::NoConvergence { .. } | FlowError::RootInsideCylinder { .. } => {
            continuation(field, z, current.phi, psi, params.advance()).ok_or(err)
        }
        other => Err(other),
    });
    match inverted {
        Ok(position) => Ok(Step {
            position,
            method: StepMethod::Inversion,
        }),
        Err(FlowError::NoConvergence { .. } | FlowError::RootInsideCylinder { .. })
            if psi_offset == 0.0 =>
        {
            log::debug!("inversion failed at {z}; falling back to rk4");
            let position = rk4_step(z, field, params)?;
            if let Some(index) = field.inside_cylinder(position) {
                return Err(FlowError::RootInsideCylinder { index }.into());
            }
            Ok(Step {
                position,
                method: StepMethod::Rk4Fallback,
            })
        }
        Err(e) => Err(e.into()),
    }
}

/// Walk the potential up in `2, 4, ..` equal increments at fixed stream value,
/// seeding each inversion with the previous root.
fn continuation(
    field: &FlowField,
    z: Complex64,
    phi: f64,
    psi: f64,
    advance: f64,
) -> Option<Complex64> {
    let mut pieces = 2;
    while pieces <= MAX_CONTINUATION_SUBSTEPS {
        let mut position = z;
        let walked = (1..=pieces).try_for_each(|i| {
            let target = PotentialStreamPair::new(phi + advance * i as f64 / pieces as f64, psi);
            position = field.invert(target, position)?;
            Ok::<_, FlowError>(())
        });
        if walked.is_ok() {
            return Some(position);
        }
        pieces *= 2;
    }
    None
}

fn flow_rate(z: Complex64, field: &FlowField, speed: f64) -> Result<Complex64, KinematicsError> {
    let df = field.eval_derivative(z)?;
    let norm = df.norm();
    if norm <= STAGNATION_THRESHOLD {
        return Err(KinematicsError::StagnationPoint { z, gradient: norm });
    }
    // speed * conj(f') / |f'|^2
    Ok(speed / df)
}

/// One classical Runge-Kutta step of `dz/dt = speed * u / |u|^2`, `u = conj(f'(z))`.
pub fn rk4_step(
    z: Complex64,
    field: &FlowField,
    params: StepParams,
) -> Result<Complex64, KinematicsError> {
    let (h, v) = (params.dt(), params.speed());
    if v == 0.0 {
        return Ok(z);
    }
    let k1 = flow_rate(z, field, v)?;
    let k2 = flow_rate(z + k1 * (h / 2.0), field, v)?;
    let k3 = flow_rate(z + k2 * (h / 2.0), field, v)?;
    let k4 = flow_rate(z + k3 * h, field, v)?;
    Ok(z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow_field::Singularity;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cylinder(radius: f64) -> FlowField {
        FlowField::new(
            0.0,
            true,
            vec![Singularity::new(c(0.0, 0.0), radius).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(StepParams::new(0.0, 1.0).is_err());
        assert!(StepParams::new(-0.1, 1.0).is_err());
        assert!(StepParams::new(0.1, -1.0).is_err());
        assert!(StepParams::new(0.1, 0.0).is_ok());
    }

    #[test]
    fn tangent_of_uniform_flow() {
        let field = FlowField::uniform(0.0).unwrap();
        let t = tangent(c(3.0, -4.0), &field).unwrap();
        assert_eq!(t.direction, c(1.0, 0.0));
        assert_eq!(t.raw_gradient_norm, 1.0);
    }

    #[test]
    fn tangent_past_cylinder() {
        let t = tangent(c(2.0, 0.0), &cylinder(1.0)).unwrap();
        assert_abs_diff_eq!(t.direction.re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.direction.im, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.raw_gradient_norm, 0.75, epsilon = 1e-15);
    }

    #[test]
    fn stagnation_point_is_reported() {
        assert!(matches!(
            tangent(c(1.0, 0.0), &cylinder(1.0)),
            Err(KinematicsError::StagnationPoint { .. })
        ));
        let params = StepParams::new(0.1, 0.3).unwrap();
        assert!(matches!(
            rk4_step(c(-1.0, 0.0), &cylinder(1.0), params),
            Err(KinematicsError::StagnationPoint { .. })
        ));
    }

    #[test]
    fn desired_velocity_examples() {
        let uniform = FlowField::uniform(0.0).unwrap();
        assert_eq!(
            desired_velocity(c(0.0, 0.0), &uniform, 0.3).unwrap(),
            c(0.3, 0.0)
        );
        assert_eq!(
            desired_velocity(c(5.0, 1.0), &cylinder(1.0), 0.0).unwrap(),
            c(0.0, 0.0)
        );
        let v = desired_velocity(c(2.0, 0.0), &cylinder(1.0), 1.0).unwrap();
        assert_abs_diff_eq!(v.re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn uniform_step_is_a_translation() {
        let field = FlowField::uniform(0.0).unwrap();
        let params = StepParams::new(0.1, 1.0).unwrap();
        let step = streamline_step(c(0.0, 0.0), &field, params).unwrap();
        assert_eq!(step.method, StepMethod::Inversion);
        assert_abs_diff_eq!(step.position.re, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(step.position.im, 0.0, epsilon = 1e-15);
        let rk = rk4_step(c(0.0, 0.0), &field, params).unwrap();
        assert_abs_diff_eq!(rk.re, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(rk.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn step_past_cylinder_conserves_stream_value() {
        let field = cylinder(1.0);
        let params = StepParams::new(0.1, 0.3).unwrap();
        let z = c(-3.0, 0.2);
        let before = field.eval(z).unwrap();
        let next = streamline_step(z, &field, params).unwrap().position;
        let after = field.eval(next).unwrap();
        assert!((after.psi - before.psi).abs() <= 1e-8);
        assert!((after.phi - before.phi - 0.03).abs() <= 1e-8);
        assert!(next.re > z.re);
    }

    #[test]
    fn zero_speed_is_a_fixed_point() {
        let field = cylinder(0.4);
        let params = StepParams::new(0.1, 0.0).unwrap();
        let z = c(-1.3, 0.25);
        assert_eq!(streamline_step(z, &field, params).unwrap().position, z);
        assert_eq!(rk4_step(z, &field, params).unwrap(), z);
    }

    #[test]
    fn offset_moves_agent_to_neighbouring_streamline() {
        let field = cylinder(0.4);
        let params = StepParams::new(0.1, 0.3).unwrap();
        let z = c(-2.0, 0.0);
        let next = streamline_step_with_offset(z, &field, params, 1e-4)
            .unwrap()
            .position;
        assert_abs_diff_eq!(field.eval(next).unwrap().psi, 1e-4, epsilon = 1e-10);
    }

    #[test]
    fn rk4_is_fourth_order_in_stream_drift() {
        let field = cylinder(0.4);
        let z = c(-0.9, 0.35);
        let psi0 = field.eval(z).unwrap().psi;
        let drift = |dt: f64| {
            let next = rk4_step(z, &field, StepParams::new(dt, 0.3).unwrap()).unwrap();
            (field.eval(next).unwrap().psi - psi0).abs()
        };
        let coarse = drift(0.2);
        let fine = drift(0.1);
        assert!(coarse > 1e-13, "drift too small to measure: {coarse:e}");
        assert!(coarse / fine >= 8.0, "ratio {}", coarse / fine);
    }
}
