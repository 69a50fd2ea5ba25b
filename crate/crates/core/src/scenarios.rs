//! Six-agent reference scenarios, one per regime, at desk scale.
//!
//! Agent counts, failure times, cylinder radii and look-ahead parameters are
//! fixed; positions and goals are chosen so each regime's behaviour shows up
//! within a few meters.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::clusters::{AgentId, AgentState, FailureEvent};
use crate::guidance::ClusterSpec;
use crate::sim::{
    Regime, ScenarioSpec, Trajectory, DEFAULT_DIVIDING_OFFSET, DEFAULT_MIN_SEPARATION,
};

/// Sliding speed used in every reproduction, m/s.
pub const SPEED: f64 = 0.3;
/// Planner period, s.
pub const PLANNER_DT: f64 = 0.1;

fn c(x: f64, y: f64) -> Complex64 {
    Complex64::new(x, y)
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    name: &str,
    regime: Regime,
    dt: f64,
    n_steps: Option<usize>,
    agents: Vec<AgentState>,
    cluster_params: &[(u32, f64, f64)],
    delta_h: f64,
    epsilon: f64,
) -> ScenarioSpec {
    let clusters = cluster_params
        .iter()
        .map(|&(id, speed, heading)| {
            ClusterSpec::new(id, speed, heading, epsilon)
                .with_members(agents.iter().filter(|a| a.cluster == id).map(|a| a.id))
        })
        .collect();
    ScenarioSpec {
        name: name.to_string(),
        regime,
        t0: 0.0,
        dt,
        n_steps,
        agents,
        clusters,
        failures: Vec::new(),
        trajectories: BTreeMap::new(),
        delta_h,
        delta: 0.15,
        n_tau: 3,
        epsilon,
        min_separation: DEFAULT_MIN_SEPARATION,
        dividing_offset: Some(DEFAULT_DIVIDING_OFFSET),
    }
}

/// Lateral spacing of the SNCF line abreast. Tighter lines let the wake of
/// the first failed agent pull neighbours into the second one's cylinder.
pub const SNCF_SPACING: f64 = 0.8;

/// Six agents abreast at `spacing`, heading +x; agent 4 fails at 2 s and
/// agent 5 at 12 s, each enclosed by a 0.4 m cylinder.
pub fn sncf_six_agents(spacing: f64) -> ScenarioSpec {
    let agents = (1..=6)
        .map(|id: AgentId| {
            let role = ScenarioSpec::initial_role(Regime::Sncf, 1);
            AgentState::new(id, 1, c(0.0, (id as f64 - 1.0) * spacing), role)
        })
        .collect();
    let mut spec = assemble(
        "sncf-six-agents",
        Regime::Sncf,
        PLANNER_DT,
        Some(300),
        agents,
        &[(1, SPEED, 0.0), (2, 0.0, 0.0)],
        0.4,
        0.05,
    );
    spec.failures = vec![
        FailureEvent {
            time: 2.0,
            agent_id: 4,
        },
        FailureEvent {
            time: 12.0,
            agent_id: 5,
        },
    ];
    spec
}

/// Three cooperative agents crossing the paths of three agents that fly
/// straight predefined lines across the corridor.
pub fn tvnc_six_agents() -> ScenarioSpec {
    let mut agents: Vec<AgentState> = (1..=3)
        .map(|id: AgentId| {
            let y = (id as f64 - 1.0) * 0.8;
            AgentState::new(
                id,
                1,
                c(0.0, y),
                ScenarioSpec::initial_role(Regime::Tvnc, 1),
            )
            .with_goal(c(4.0, y))
        })
        .collect();
    let mut trajectories = BTreeMap::new();
    // (id, x of the crossing line, start time)
    for (id, x, start) in [(4, 1.4, 0.0), (5, 2.2, 4.0), (6, 3.0, 8.0)] {
        let from = c(x, 3.0);
        let to = c(x, -1.5);
        let duration = (from - to).norm() / SPEED;
        agents.push(AgentState::new(
            id,
            2,
            from,
            ScenarioSpec::initial_role(Regime::Tvnc, 2),
        ));
        trajectories.insert(
            id,
            Trajectory::new(vec![(start, from), (start + duration, to)]),
        );
    }
    let mut spec = assemble(
        "tvnc-six-agents",
        Regime::Tvnc,
        PLANNER_DT,
        None,
        agents,
        &[(1, SPEED, 0.0), (2, SPEED, 0.0)],
        0.3,
        0.05,
    );
    spec.trajectories = trajectories;
    spec
}

/// Two three-agent clusters on perpendicular corridors that cross.
pub fn tvc_six_agents() -> ScenarioSpec {
    tvc_crossing(TVC_STAGGER)
}

/// Offset of the second cluster's start line; with equal speeds, agents of the
/// two clusters miss each other by `stagger / sqrt(2)` when nobody deviates.
pub const TVC_STAGGER: f64 = 0.2;

pub fn tvc_crossing(stagger: f64) -> ScenarioSpec {
    let mut agents = Vec::new();
    for (k, id) in (1..=3).enumerate() {
        let y = k as f64 * 0.6;
        agents.push(
            AgentState::new(id, 1, c(0.0, y), ScenarioSpec::initial_role(Regime::Tvc, 1))
                .with_goal(c(4.0, y)),
        );
    }
    for (k, id) in (4..=6).enumerate() {
        let x = 1.7 + k as f64 * 0.6;
        agents.push(
            AgentState::new(
                id,
                2,
                c(x, -1.7 + stagger),
                ScenarioSpec::initial_role(Regime::Tvc, 2),
            )
            .with_goal(c(x, 2.6)),
        );
    }
    assemble(
        "tvc-six-agents",
        Regime::Tvc,
        PLANNER_DT,
        Some(300),
        agents,
        &[(1, SPEED, 0.0), (2, SPEED, std::f64::consts::FRAC_PI_2)],
        0.1,
        0.05,
    )
}
