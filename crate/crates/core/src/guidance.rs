//! Goal-directed heading, look-ahead conflict detection and the two
//! time-varying controllers (non-cooperative and cooperative).

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::clusters::{foreign_singularities, AgentId, AgentState, ClusterId};
use crate::flow_field::FlowField;
use crate::kinematics::StepParams;
use crate::sim::{self, EventFlags, RunError, ScenarioSpec, TrajectoryLog};

/// Resultant goal offsets shorter than this have no direction.
pub const MIN_RESULTANT: f64 = 1e-12;

/// Cooperative cluster in a non-cooperative run.
pub const COOPERATIVE_CLUSTER: ClusterId = 1;
/// Agents flying predefined trajectories in a non-cooperative run.
pub const NONCOOPERATIVE_CLUSTER: ClusterId = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GuidanceError {
    #[error("goal offsets cancel out; the cluster has no bulk direction")]
    AllAtGoal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    pub id: ClusterId,
    pub members: BTreeSet<AgentId>,
    pub speed: f64,
    pub beta: bool,
    pub heading: f64,
    pub goal_tolerance: f64,
}

impl ClusterSpec {
    pub fn new(id: ClusterId, speed: f64, heading: f64, goal_tolerance: f64) -> Self {
        Self {
            id,
            members: BTreeSet::new(),
            speed,
            beta: false,
            heading,
            goal_tolerance,
        }
    }

    pub fn with_members(mut self, members: impl IntoIterator<Item = AgentId>) -> Self {
        self.members = members.into_iter().collect();
        self
    }
}

/// Forward-looking rectangle: rear edge centered on `anchor`, `length` along
/// `heading`, `half_width` to either side. Membership is boundary-inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualBox {
    pub anchor: Complex64,
    pub heading: f64,
    pub half_width: f64,
    pub length: f64,
}

impl VirtualBox {
    pub fn new(anchor: Complex64, heading: f64, half_width: f64, length: f64) -> Self {
        debug_assert!(half_width > 0.0 && length >= 0.0);
        Self {
            anchor,
            heading,
            half_width,
            length,
        }
    }

    pub fn contains(&self, point: Complex64) -> bool {
        let local = (point - self.anchor) * Complex64::from_polar(1.0, -self.heading);
        (0.0..=self.length).contains(&local.re) && local.im.abs() <= self.half_width
    }
}

/// Bulk heading: argument of the summed goal offsets, in `(-pi, pi]`.
pub fn heading_from_goals<'a>(
    agents: impl IntoIterator<Item = &'a AgentState>,
) -> Result<f64, GuidanceError> {
    let resultant: Complex64 = agents.into_iter().filter_map(AgentState::goal_offset).sum();
    if resultant.norm() <= MIN_RESULTANT {
        return Err(GuidanceError::AllAtGoal);
    }
    let theta = resultant.arg();
    Ok(if theta <= -PI { PI } else { theta })
}

fn members_of(agents: &[AgentState], cluster: ClusterId) -> impl Iterator<Item = &AgentState> {
    agents.iter().filter(move |a| a.cluster == cluster)
}

/// Every `(i, j)` with agent `j` from another cluster inside the box of agent `i`.
pub fn zeta_witnesses(
    clusters: &[ClusterSpec],
    agents: &[AgentState],
    delta: f64,
    n_tau: usize,
    dt: f64,
) -> Vec<(AgentId, AgentId)> {
    let mut witnesses = Vec::new();
    for cluster in clusters {
        let length = cluster.speed * n_tau as f64 * dt;
        for member in agents.iter().filter(|a| cluster.members.contains(&a.id)) {
            let bx = VirtualBox::new(member.position, cluster.heading, delta, length);
            for other in agents.iter().filter(|a| !cluster.members.contains(&a.id)) {
                if bx.contains(other.position) {
                    witnesses.push((member.id, other.id));
                }
            }
        }
    }
    witnesses
}

/// True iff some agent's look-ahead box contains an agent of another cluster.
pub fn zeta_check(
    clusters: &[ClusterSpec],
    agents: &[AgentState],
    delta: f64,
    n_tau: usize,
    dt: f64,
) -> bool {
    clusters.iter().any(|cluster| {
        let length = cluster.speed * n_tau as f64 * dt;
        agents
            .iter()
            .filter(|a| cluster.members.contains(&a.id))
            .any(|member| {
                let bx = VirtualBox::new(member.position, cluster.heading, delta, length);
                agents
                    .iter()
                    .filter(|a| !cluster.members.contains(&a.id))
                    .any(|other| bx.contains(other.position))
            })
    })
}

/// All clusters exclude foreign agents when a conflict is predicted, none otherwise.
pub fn update_betas(zeta: bool, clusters: &[ClusterSpec]) -> Vec<ClusterSpec> {
    clusters
        .iter()
        .map(|c| ClusterSpec {
            beta: zeta,
            ..c.clone()
        })
        .collect()
}

fn residual(agents: &[AgentState], cluster: ClusterId) -> (f64, usize) {
    members_of(agents, cluster)
        .filter_map(|a| a.goal.map(|g| (g - a.position).norm()))
        .fold((0.0, 0), |(sum, n), d| (sum + d, n + 1))
}

fn arrived(agent: &AgentState, tolerance: f64) -> bool {
    agent
        .goal
        .is_some_and(|g| (g - agent.position).norm() <= tolerance)
}

/// Time-varying non-cooperative navigation. Cooperative agents re-plan each
/// tick around the current positions of agents flying predefined paths,
/// until the summed goal distance drops to `|V_1| * epsilon`.
pub fn tvnc_run(spec: &ScenarioSpec) -> Result<TrajectoryLog, RunError> {
    let coop = spec
        .cluster(COOPERATIVE_CLUSTER)
        .expect("validated: TVNC declares the cooperative cluster");
    let params = StepParams::new(spec.dt, coop.speed)?;
    let tolerance = coop.goal_tolerance;
    let budget = spec.n_steps.unwrap_or_else(|| spec.default_step_budget());

    let mut agents = spec.agents.clone();
    agents.sort_by_key(|a| a.id);
    let mut theta = coop.heading;
    let mut log = TrajectoryLog::default();

    for k in 0.. {
        let time = spec.time_of(k);
        for agent in agents
            .iter_mut()
            .filter(|a| a.cluster == NONCOOPERATIVE_CLUSTER)
        {
            if let Some(path) = spec.trajectories.get(&agent.id) {
                agent.position = path.position_at(time);
            }
        }

        let (sum, count) = residual(&agents, COOPERATIVE_CLUSTER);
        let done = sum <= count as f64 * spec.epsilon;
        let mut flags: BTreeMap<AgentId, EventFlags> = BTreeMap::new();
        let holding = match heading_from_goals(members_of(&agents, COOPERATIVE_CLUSTER)) {
            Ok(t) => {
                theta = t;
                false
            }
            Err(GuidanceError::AllAtGoal) => true,
        };
        let field = FlowField::new(
            theta,
            true,
            foreign_singularities(&agents, COOPERATIVE_CLUSTER, spec.delta_h),
        )?;

        let mut next = Vec::new();
        let stepping = !done && k < budget;
        if stepping {
            for agent in members_of(&agents, COOPERATIVE_CLUSTER) {
                if arrived(agent, tolerance) {
                    *flags.entry(agent.id).or_default() |= EventFlags::ARRIVED;
                    continue;
                }
                if holding {
                    *flags.entry(agent.id).or_default() |= EventFlags::HOLD;
                    continue;
                }
                let (position, step_flags) = sim::advance(agent.position, &field, params, 0.0);
                *flags.entry(agent.id).or_default() |= step_flags;
                next.push((agent.id, position));
            }
        }

        let fields = BTreeMap::from([(COOPERATIVE_CLUSTER, field)]);
        log.ticks
            .push(sim::snapshot(time, &agents, &fields, &flags));

        if done {
            return Ok(log);
        }
        if k >= budget {
            return Err(RunError::StepBudgetExhausted {
                budget,
                log: Box::new(log),
            });
        }
        for (id, position) in next {
            if let Some(agent) = agents.iter_mut().find(|a| a.id == id) {
                agent.position = position;
            }
        }
    }
    unreachable!("the tick loop only exits by returning")
}

/// Time-varying cooperative navigation: every cluster runs its own field and
/// excludes foreign agents only while a conflict is predicted.
pub fn tvc_run(spec: &ScenarioSpec) -> Result<TrajectoryLog, RunError> {
    let n_steps = spec.n_steps.expect("validated: TVC has n_steps");
    let mut agents = spec.agents.clone();
    agents.sort_by_key(|a| a.id);
    let mut clusters = spec.clusters.clone();
    clusters.sort_by_key(|c| c.id);
    let mut log = TrajectoryLog::default();

    for k in 0..=n_steps {
        let mut flags: BTreeMap<AgentId, EventFlags> = BTreeMap::new();

        // Headings first: the look-ahead boxes are oriented along them.
        let mut holding = BTreeSet::new();
        for cluster in clusters.iter_mut() {
            match heading_from_goals(members_of(&agents, cluster.id)) {
                Ok(theta) => cluster.heading = theta,
                Err(GuidanceError::AllAtGoal) => {
                    holding.insert(cluster.id);
                }
            }
        }
        let zeta = zeta_check(&clusters, &agents, spec.delta, spec.n_tau, spec.dt);
        clusters = update_betas(zeta, &clusters);

        let mut fields = BTreeMap::new();
        for cluster in &clusters {
            let singularities = if cluster.beta {
                foreign_singularities(&agents, cluster.id, spec.delta_h)
            } else {
                Vec::new()
            };
            fields.insert(
                cluster.id,
                FlowField::new(cluster.heading, cluster.beta, singularities)?,
            );
        }

        let mut next = Vec::new();
        if k < n_steps {
            for cluster in &clusters {
                let params = StepParams::new(spec.dt, cluster.speed)?;
                let field = &fields[&cluster.id];
                for agent in members_of(&agents, cluster.id) {
                    if arrived(agent, cluster.goal_tolerance) {
                        *flags.entry(agent.id).or_default() |= EventFlags::ARRIVED;
                        continue;
                    }
                    if holding.contains(&cluster.id) {
                        *flags.entry(agent.id).or_default() |= EventFlags::HOLD;
                        continue;
                    }
                    let (position, step_flags) = sim::advance(agent.position, field, params, 0.0);
                    *flags.entry(agent.id).or_default() |= step_flags;
                    next.push((agent.id, position));
                }
            }
        }

        log.ticks
            .push(sim::snapshot(spec.time_of(k), &agents, &fields, &flags));

        for (id, position) in next {
            if let Some(agent) = agents.iter_mut().find(|a| a.id == id) {
                agent.position = position;
            }
        }
    }
    Ok(log)
}
