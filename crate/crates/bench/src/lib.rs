//! Fixtures shared by the benchmarks.

use fluidnav::{FlowField, Singularity};
use num_complex::Complex64;

/// Heading 0.7 rad with `count` cylinders of radius 0.3 spaced 1.5 m apart
/// along the x axis.
pub fn row_of_cylinders(count: usize) -> FlowField {
    let singularities = (0..count)
        .map(|i| {
            Singularity::new(Complex64::new(1.5 * i as f64, 0.0), 0.3).expect("positive radius")
        })
        .collect();
    FlowField::new(0.7, true, singularities).expect("finite parameters")
}

/// Points on a ring of radius 0.6 around each cylinder center.
pub fn probe_points(field: &FlowField, per_cylinder: usize) -> Vec<Complex64> {
    field
        .singularities()
        .iter()
        .flat_map(|s| {
            (0..per_cylinder).map(move |k| {
                let angle = std::f64::consts::TAU * k as f64 / per_cylinder as f64;
                s.center() + Complex64::from_polar(0.6, angle)
            })
        })
        .collect()
}
