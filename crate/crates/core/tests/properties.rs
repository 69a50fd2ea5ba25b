use std::f64::consts::PI;

use fluidnav::guidance::{heading_from_goals, zeta_check};
use fluidnav::io::{
    parse_scenario_str, serialize_scenario, trajectory_from_bytes, trajectory_to_bytes,
};
use fluidnav::kinematics::tangent;
use fluidnav::sim::{AgentRecord, TickRecord};
use fluidnav::*;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn complex_in(lo: f64, hi: f64) -> impl Strategy<Value = Complex64> {
    (lo..hi, lo..hi).prop_map(|(x, y)| c(x, y))
}

/// 1-3 disjoint cylinders with a heading and a point well outside all of them.
fn field_and_point() -> impl Strategy<Value = (FlowField, Complex64)> {
    (
        -PI..PI,
        prop::collection::vec((complex_in(-3.0, 3.0), 0.1..0.5f64), 1..=3),
        complex_in(-5.0, 5.0),
    )
        .prop_filter_map(
            "overlapping disks or point too close",
            |(theta, disks, z)| {
                for (i, a) in disks.iter().enumerate() {
                    for b in &disks[i + 1..] {
                        if (a.0 - b.0).norm() <= a.1 + b.1 + 0.05 {
                            return None;
                        }
                    }
                }
                let singularities = disks
                    .iter()
                    .map(|&(center, r)| Singularity::new(center, r).unwrap())
                    .collect();
                let field = FlowField::new(theta, true, singularities).ok()?;
                let clear = field.min_clearance(z)?;
                (clear > 0.05 && field.eval_derivative(z).ok()?.norm() > 1e-3).then_some((field, z))
            },
        )
}

proptest! {
    #[test]
    fn cauchy_riemann_by_finite_differences((field, z) in field_and_point()) {
        let h = 1e-5;
        let e = |z: Complex64| field.eval(z).unwrap();
        let (xp, xm, yp, ym) = (e(z + h), e(z - h), e(z + c(0.0, h)), e(z - c(0.0, h)));
        let scale = field.eval_derivative(z).unwrap().norm();
        let r1 = ((xp.phi - xm.phi) - (yp.psi - ym.psi)).abs() / (2.0 * h) / scale;
        let r2 = ((yp.phi - ym.phi) + (xp.psi - xm.psi)).abs() / (2.0 * h) / scale;
        prop_assert!(r1 <= 1e-5 && r2 <= 1e-5, "{r1} {r2}");
    }

    #[test]
    fn derivative_matches_finite_difference((field, z) in field_and_point()) {
        let h = 1e-6;
        let fd = (field.potential(z + h).unwrap() - field.potential(z - h).unwrap()) / (2.0 * h);
        let exact = field.eval_derivative(z).unwrap();
        prop_assert!((fd - exact).norm() <= 1e-6 * exact.norm().max(1.0));
    }

    #[test]
    fn level_curves_are_orthogonal((field, z) in field_and_point()) {
        let h = 1e-5;
        let e = |z: Complex64| field.eval(z).unwrap();
        let (xp, xm, yp, ym) = (e(z + h), e(z - h), e(z + c(0.0, h)), e(z - c(0.0, h)));
        let grad_phi = ((xp.phi - xm.phi) / (2.0 * h), (yp.phi - ym.phi) / (2.0 * h));
        let grad_psi = ((xp.psi - xm.psi) / (2.0 * h), (yp.psi - ym.psi) / (2.0 * h));
        let dot = grad_phi.0 * grad_psi.0 + grad_phi.1 * grad_psi.1;
        let scale = field.eval_derivative(z).unwrap().norm_sqr();
        prop_assert!(dot.abs() <= 1e-5 * scale, "{dot} vs {scale}");
    }

    #[test]
    fn inversion_round_trip((field, z) in field_and_point(), angle in -PI..PI) {
        let guess = z + Complex64::from_polar(0.01, angle);
        prop_assume!(field.inside_cylinder(guess).is_none());
        let root = field.invert(field.eval(z).unwrap(), guess).unwrap();
        prop_assert!((root - z).norm() <= 1e-9);
        prop_assert!(field.inside_cylinder(root).is_none());
    }

    #[test]
    fn tangent_has_unit_length((field, z) in field_and_point()) {
        let t = tangent(z, &field).unwrap();
        prop_assert!((t.direction.norm() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn heading_rotates_with_goals(
        offsets in prop::collection::vec(complex_in(-5.0, 5.0), 1..6),
        alpha in -PI..PI,
    ) {
        let build = |rot: Complex64| -> Vec<AgentState> {
            offsets
                .iter()
                .enumerate()
                .map(|(i, &o)| {
                    AgentState::new(i as u32, 1, c(i as f64, 0.0), Role::Cooperative)
                        .with_goal(c(i as f64, 0.0) + o * rot)
                })
                .collect()
        };
        let resultant: Complex64 = offsets.iter().sum();
        prop_assume!(resultant.norm() > 1e-3);
        let theta = heading_from_goals(&build(Complex64::new(1.0, 0.0))).unwrap();
        let turned = heading_from_goals(&build(Complex64::from_polar(1.0, alpha))).unwrap();
        prop_assert!(turned > -PI && turned <= PI);
        let diff = (turned - theta - alpha).rem_euclid(2.0 * PI);
        prop_assert!(diff.min(2.0 * PI - diff) <= 1e-12);
    }

    #[test]
    fn box_membership_is_rigid(
        anchor in complex_in(-2.0, 2.0),
        heading in -PI..PI,
        half_width in 0.05..0.5f64,
        length in 0.05..1.5f64,
        local in complex_in(-2.0, 2.0),
        shift in complex_in(-5.0, 5.0),
        turn in -PI..PI,
    ) {
        let bx = VirtualBox::new(anchor, heading, half_width, length);
        let p = anchor + local;
        let rot = Complex64::from_polar(1.0, turn);
        let moved = VirtualBox::new(anchor * rot + shift, heading + turn, half_width, length);
        // Skip points within rounding distance of an edge.
        let l = local * Complex64::from_polar(1.0, -heading);
        let margin = [l.re, length - l.re, half_width - l.im.abs()]
            .into_iter()
            .map(f64::abs)
            .fold(f64::INFINITY, f64::min);
        prop_assume!(margin > 1e-9);
        prop_assert_eq!(bx.contains(p), moved.contains(p * rot + shift));
    }

    #[test]
    fn zeta_is_monotone_in_box_size(
        positions in prop::collection::vec(complex_in(-1.5, 1.5), 4),
        h1 in -PI..PI,
        h2 in -PI..PI,
        d1 in 0.01..0.5f64,
        extra_width in 0.0..0.5f64,
        n1 in 1usize..6,
        extra_steps in 0usize..6,
    ) {
        let agents: Vec<AgentState> = positions
            .iter()
            .enumerate()
            .map(|(i, &p)| AgentState::new(i as u32 + 1, if i < 2 { 1 } else { 2 }, p, Role::Cooperative))
            .collect();
        let clusters = [
            ClusterSpec::new(1, 0.3, h1, 0.05).with_members([1, 2]),
            ClusterSpec::new(2, 0.3, h2, 0.05).with_members([3, 4]),
        ];
        if zeta_check(&clusters, &agents, d1, n1, 0.1) {
            prop_assert!(zeta_check(&clusters, &agents, d1 + extra_width, n1 + extra_steps, 0.1));
        }
    }

    #[test]
    fn trajectory_table_round_trip(
        rows in prop::collection::vec(
            (complex_in(-1e3, 1e3), any::<bool>(), -PI..PI, -1e6..1e6f64, 0u16..256),
            1..8,
        ),
        time in -1e3..1e3f64,
    ) {
        let agents = rows
            .iter()
            .enumerate()
            .map(|(i, &(z, beta, theta, phi, bits))| AgentRecord {
                id: i as u32 + 1,
                cluster: 1 + (i as u32 % 2),
                position: z,
                role: Role::Cooperative,
                potential: Some(PotentialStreamPair::new(phi, -phi / 3.0)),
                beta: Some(beta),
                theta: Some(theta),
                flags: EventFlags::from_bits_truncate(bits),
            })
            .collect();
        let log = TrajectoryLog { ticks: vec![TickRecord { time, agents }] };
        let bytes = trajectory_to_bytes(&log).unwrap();
        let parsed = trajectory_from_bytes(&bytes).unwrap();
        prop_assert_eq!(&parsed, &log);
        prop_assert_eq!(trajectory_to_bytes(&parsed).unwrap(), bytes);
    }

    #[test]
    fn scenario_file_round_trip(
        speed in 0.01..2.0f64,
        dt in 0.001..1.0f64,
        delta_h in 0.01..1.0f64,
        spacing in 0.5..3.0f64,
        fail_at in 0.0..10.0f64,
    ) {
        let mut spec = fluidnav::scenarios::sncf_six_agents(spacing);
        spec.clusters[0].speed = speed;
        spec.dt = dt;
        spec.n_steps = Some(((20.0 / dt).ceil() as usize).max(1));
        spec.delta_h = delta_h;
        spec.failures.truncate(1);
        spec.failures[0].time = fail_at;
        let text = serialize_scenario(&spec);
        let parsed = parse_scenario_str(&text).unwrap();
        prop_assert_eq!(&parsed, &spec);
        prop_assert_eq!(serialize_scenario(&parsed), text);
    }
}
