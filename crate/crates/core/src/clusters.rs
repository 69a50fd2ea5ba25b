//! Agents, the healthy/faulty partition, failure handling and the
//! stationary-failure (SNCF) controller.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow_field::{FlowField, Singularity};
use crate::kinematics::StepParams;
use crate::sim::{self, EventFlags, RunError, ScenarioSpec, TrajectoryLog};

pub type AgentId = u32;
pub type ClusterId = u32;

/// Cluster holding healthy agents in a stationary-failure run.
pub const HEALTHY_CLUSTER: ClusterId = 1;
/// Cluster absorbing agents once they fail.
pub const FAULTY_CLUSTER: ClusterId = 2;

/// Stream-value band around a new cylinder's dividing streamline in which an
/// agent is flagged at failure time.
pub const DIVIDING_BAND: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Cooperative,
    Faulty,
    #[serde(rename = "noncooperative")]
    NonCooperative,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Cooperative => "cooperative",
            Role::Faulty => "faulty",
            Role::NonCooperative => "noncooperative",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cooperative" => Ok(Role::Cooperative),
            "faulty" => Ok(Role::Faulty),
            "noncooperative" => Ok(Role::NonCooperative),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: AgentId,
    pub cluster: ClusterId,
    pub position: Complex64,
    pub role: Role,
    pub goal: Option<Complex64>,
}

impl AgentState {
    pub fn new(id: AgentId, cluster: ClusterId, position: Complex64, role: Role) -> Self {
        Self {
            id,
            cluster,
            position,
            role,
            goal: None,
        }
    }

    pub fn with_goal(mut self, goal: Complex64) -> Self {
        self.goal = Some(goal);
        self
    }

    pub fn goal_offset(&self) -> Option<Complex64> {
        self.goal.map(|g| g - self.position)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureEvent {
    pub time: f64,
    pub agent_id: AgentId,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClusterError {
    #[error("agent {0} is not part of the scenario")]
    UnknownAgent(AgentId),
    #[error("agent {0} has already failed")]
    AlreadyFaulty(AgentId),
}

/// Healthy and faulty agent sets; always disjoint, union is every agent.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Partition {
    healthy: BTreeSet<AgentId>,
    faulty: BTreeSet<AgentId>,
}

impl Partition {
    pub fn from_agents(agents: &[AgentState]) -> Self {
        let mut partition = Self::default();
        for agent in agents {
            if agent.role == Role::Faulty {
                partition.faulty.insert(agent.id);
            } else {
                partition.healthy.insert(agent.id);
            }
        }
        partition
    }

    pub fn healthy(&self) -> &BTreeSet<AgentId> {
        &self.healthy
    }

    pub fn faulty(&self) -> &BTreeSet<AgentId> {
        &self.faulty
    }

    /// Move the failing agent to the faulty set and mark it faulty in
    /// `agents`. Its position is left untouched and is never updated again.
    pub fn apply_failure(
        &self,
        event: &FailureEvent,
        agents: &mut [AgentState],
    ) -> Result<Partition, ClusterError> {
        let id = event.agent_id;
        if self.faulty.contains(&id) {
            return Err(ClusterError::AlreadyFaulty(id));
        }
        if !self.healthy.contains(&id) {
            return Err(ClusterError::UnknownAgent(id));
        }
        let agent = agents
            .iter_mut()
            .find(|a| a.id == id)
            .ok_or(ClusterError::UnknownAgent(id))?;
        agent.role = Role::Faulty;
        agent.cluster = FAULTY_CLUSTER;

        let mut next = self.clone();
        next.healthy.remove(&id);
        next.faulty.insert(id);
        Ok(next)
    }
}

/// Cylinders of radius `radius` around every agent outside `cluster`, in id order.
pub fn foreign_singularities(
    agents: &[AgentState],
    cluster: ClusterId,
    radius: f64,
) -> Vec<Singularity> {
    let mut foreign: Vec<&AgentState> = agents.iter().filter(|a| a.cluster != cluster).collect();
    foreign.sort_by_key(|a| a.id);
    foreign
        .into_iter()
        .map(|a| Singularity::new(a.position, radius).expect("validated agent position and radius"))
        .collect()
}

/// Field seen by the healthy agents: one cylinder of radius `delta` per faulty agent.
pub fn sncf_field(
    partition: &Partition,
    agents: &[AgentState],
    theta: f64,
    delta: f64,
) -> FlowField {
    let singularities = partition
        .faulty
        .iter()
        .filter_map(|id| agents.iter().find(|a| a.id == *id))
        .map(|a| Singularity::new(a.position, delta).expect("validated agent position and radius"))
        .collect();
    FlowField::new(theta, true, singularities).expect("validated heading")
}

/// Stationary non-concurrent failures: healthy agents slide along the
/// streamlines of a field that is rebuilt only when an agent fails.
pub fn sncf_run(spec: &ScenarioSpec) -> Result<TrajectoryLog, RunError> {
    let healthy = spec
        .cluster(HEALTHY_CLUSTER)
        .expect("validated: SNCF declares the healthy cluster");
    let theta = healthy.heading;
    let params = StepParams::new(spec.dt, healthy.speed)?;
    let n_steps = spec.n_steps.expect("validated: SNCF has n_steps");

    let mut agents = spec.agents.clone();
    agents.sort_by_key(|a| a.id);
    let mut partition = Partition::from_agents(&agents);

    let mut failures_at: BTreeMap<usize, Vec<FailureEvent>> = BTreeMap::new();
    for event in &spec.failures {
        failures_at
            .entry(spec.tick_of(event.time))
            .or_default()
            .push(*event);
    }

    let mut field = sncf_field(&partition, &agents, theta, spec.delta_h);
    let mut pending_offsets: BTreeMap<AgentId, f64> = BTreeMap::new();
    let mut log = TrajectoryLog::default();

    for k in 0..=n_steps {
        let mut flags: BTreeMap<AgentId, EventFlags> = BTreeMap::new();

        if let Some(events) = failures_at.get(&k) {
            for event in events {
                partition = partition.apply_failure(event, &mut agents)?;
                *flags.entry(event.agent_id).or_default() |= EventFlags::FAILED;
            }
            field = sncf_field(&partition, &agents, theta, spec.delta_h);
            for event in events {
                let center = agents
                    .iter()
                    .find(|a| a.id == event.agent_id)
                    .map(|a| a.position)
                    .expect("failed agent exists");
                flag_dividing_streamline(
                    spec,
                    &field,
                    center,
                    &agents,
                    &partition,
                    &mut flags,
                    &mut pending_offsets,
                );
            }
        }

        let mut next = Vec::new();
        if k < n_steps {
            for agent in agents.iter().filter(|a| partition.healthy.contains(&a.id)) {
                let offset = pending_offsets.remove(&agent.id).unwrap_or(0.0);
                let (position, step_flags) = sim::advance(agent.position, &field, params, offset);
                *flags.entry(agent.id).or_default() |= step_flags;
                next.push((agent.id, position));
            }
        }

        let fields = BTreeMap::from([(HEALTHY_CLUSTER, field.clone())]);
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

fn flag_dividing_streamline(
    spec: &ScenarioSpec,
    field: &FlowField,
    center: Complex64,
    agents: &[AgentState],
    partition: &Partition,
    flags: &mut BTreeMap<AgentId, EventFlags>,
    pending_offsets: &mut BTreeMap<AgentId, f64>,
) {
    // Upstream stagnation point of the new cylinder.
    let front = center - Complex64::from_polar(spec.delta_h, field.theta());
    let Ok(dividing) = field.eval(front) else {
        return;
    };
    for agent in agents.iter().filter(|a| partition.healthy.contains(&a.id)) {
        let Ok(value) = field.eval(agent.position) else {
            continue;
        };
        if (value.psi - dividing.psi).abs() <= DIVIDING_BAND {
            log::info!(
                "agent {} is on the dividing streamline of a new cylinder",
                agent.id
            );
            *flags.entry(agent.id).or_default() |= EventFlags::DIVIDING;
            if let Some(offset) = spec.dividing_offset {
                pending_offsets.insert(agent.id, offset);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_of_six() -> Vec<AgentState> {
        (1..=6)
            .map(|id| {
                AgentState::new(
                    id,
                    HEALTHY_CLUSTER,
                    Complex64::new(0.0, id as f64),
                    Role::Cooperative,
                )
            })
            .collect()
    }

    #[test]
    fn failures_move_agents_to_faulty_set() {
        let mut agents = line_of_six();
        let p0 = Partition::from_agents(&agents);
        assert_eq!(p0.healthy().len(), 6);
        assert!(p0.faulty().is_empty());

        let p1 = p0
            .apply_failure(
                &FailureEvent {
                    time: 2.0,
                    agent_id: 4,
                },
                &mut agents,
            )
            .unwrap();
        assert_eq!(
            p1.healthy().iter().copied().collect::<Vec<_>>(),
            vec![1, 2, 3, 5, 6]
        );
        assert_eq!(p1.faulty().iter().copied().collect::<Vec<_>>(), vec![4]);
        assert_eq!(agents[3].role, Role::Faulty);
        assert_eq!(agents[3].cluster, FAULTY_CLUSTER);

        let p2 = p1
            .apply_failure(
                &FailureEvent {
                    time: 12.0,
                    agent_id: 5,
                },
                &mut agents,
            )
            .unwrap();
        assert_eq!(
            p2.healthy().iter().copied().collect::<Vec<_>>(),
            vec![1, 2, 3, 6]
        );
        assert_eq!(p2.faulty().iter().copied().collect::<Vec<_>>(), vec![4, 5]);

        assert_eq!(
            p2.apply_failure(
                &FailureEvent {
                    time: 13.0,
                    agent_id: 4
                },
                &mut agents
            ),
            Err(ClusterError::AlreadyFaulty(4))
        );
        assert_eq!(
            p2.apply_failure(
                &FailureEvent {
                    time: 13.0,
                    agent_id: 9
                },
                &mut agents
            ),
            Err(ClusterError::UnknownAgent(9))
        );
    }

    #[test]
    fn sncf_field_tracks_faulty_set() {
        let mut agents = line_of_six();
        let p0 = Partition::from_agents(&agents);
        let f0 = sncf_field(&p0, &agents, 0.0, 0.4);
        assert!(f0.beta());
        assert!(!f0.effective_beta());

        let p1 = p0
            .apply_failure(
                &FailureEvent {
                    time: 2.0,
                    agent_id: 4,
                },
                &mut agents,
            )
            .unwrap();
        let f1 = sncf_field(&p1, &agents, 0.0, 0.4);
        assert_eq!(f1.singularities().len(), 1);
        assert_eq!(f1.singularities()[0].center(), Complex64::new(0.0, 4.0));
        assert_eq!(f1.singularities()[0].radius(), 0.4);

        let p2 = p1
            .apply_failure(
                &FailureEvent {
                    time: 12.0,
                    agent_id: 5,
                },
                &mut agents,
            )
            .unwrap();
        assert_eq!(sncf_field(&p2, &agents, 0.0, 0.4).singularities().len(), 2);
    }

    #[test]
    fn role_names_round_trip() {
        for role in [Role::Cooperative, Role::Faulty, Role::NonCooperative] {
            assert_eq!(role.as_str().parse::<Role>().unwrap(), role);
        }
        assert!("broken".parse::<Role>().is_err());
    }
}
