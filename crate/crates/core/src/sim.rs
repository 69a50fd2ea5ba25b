//! Scenario description, regime dispatch, trajectory logging and the safety
//! audit.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clusters::{
    self, foreign_singularities, AgentId, AgentState, ClusterError, ClusterId, FailureEvent, Role,
    FAULTY_CLUSTER, HEALTHY_CLUSTER,
};
use crate::flow_field::{FlowError, FlowField, PotentialStreamPair};
use crate::guidance::{self, ClusterSpec, COOPERATIVE_CLUSTER, NONCOOPERATIVE_CLUSTER};
use crate::kinematics::{self, KinematicsError, StepMethod, StepParams};

/// Clearance below `-CLEARANCE_TOLERANCE` counts as a cylinder breach.
pub const CLEARANCE_TOLERANCE: f64 = 1e-3;
/// Default minimum distance between agents of different clusters.
pub const DEFAULT_MIN_SEPARATION: f64 = 0.1;
/// Default stream-value shift for agents caught on a new dividing streamline.
pub const DEFAULT_DIVIDING_OFFSET: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Stationary non-concurrent failures.
    Sncf,
    /// Time-varying non-cooperative agents.
    Tvnc,
    /// Time-varying cooperative clusters.
    Tvc,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Sncf => "sncf",
            Regime::Tvnc => "tvnc",
            Regime::Tvc => "tvc",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Piecewise-linear path through timed waypoints, held constant outside
/// their time span.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    waypoints: Vec<(f64, Complex64)>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<(f64, Complex64)>) -> Self {
        Self { waypoints }
    }

    pub fn waypoints(&self) -> &[(f64, Complex64)] {
        &self.waypoints
    }

    pub fn position_at(&self, t: f64) -> Complex64 {
        let w = &self.waypoints;
        let Some(&(t_first, z_first)) = w.first() else {
            return Complex64::new(0.0, 0.0);
        };
        if t <= t_first {
            return z_first;
        }
        for pair in w.windows(2) {
            let ((t0, z0), (t1, z1)) = (pair[0], pair[1]);
            if t <= t1 {
                if t1 == t0 {
                    return z1;
                }
                let s = (t - t0) / (t1 - t0);
                return z0 + (z1 - z0) * s;
            }
        }
        w[w.len() - 1].1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IssueKind {
    /// A field is missing, malformed or out of range.
    Schema,
    /// The scenario contradicts the properties of its regime.
    Regime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecIssue {
    pub kind: IssueKind,
    pub field: String,
    pub message: String,
}

impl fmt::Display for SpecIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            IssueKind::Schema => "schema",
            IssueKind::Regime => "regime",
        };
        write!(f, "{kind} error in `{}`: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid scenario: {}", .issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct SpecError {
    pub issues: Vec<SpecIssue>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    InvalidSpec(#[from] SpecError),
    #[error("step budget of {budget} exhausted before every agent reached its goal")]
    StepBudgetExhausted {
        budget: usize,
        log: Box<TrajectoryLog>,
    },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub regime: Regime,
    pub t0: f64,
    pub dt: f64,
    /// Number of steps; for non-cooperative runs this is the step budget and
    /// may be left out.
    pub n_steps: Option<usize>,
    pub agents: Vec<AgentState>,
    pub clusters: Vec<ClusterSpec>,
    pub failures: Vec<FailureEvent>,
    pub trajectories: BTreeMap<AgentId, Trajectory>,
    pub delta_h: f64,
    pub delta: f64,
    pub n_tau: usize,
    pub epsilon: f64,
    pub min_separation: f64,
    pub dividing_offset: Option<f64>,
}

impl ScenarioSpec {
    pub fn cluster(&self, id: ClusterId) -> Option<&ClusterSpec> {
        self.clusters.iter().find(|c| c.id == id)
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentState> {
        self.agents.iter().find(|a| a.id == id)
    }

    pub fn time_of(&self, tick: usize) -> f64 {
        self.t0 + tick as f64 * self.dt
    }

    /// Nearest tick to `t`.
    pub fn tick_of(&self, t: f64) -> usize {
        ((t - self.t0) / self.dt).round().max(0.0) as usize
    }

    /// Ten times the number of steps the farthest cooperative agent needs at
    /// full speed.
    pub fn default_step_budget(&self) -> usize {
        let speed = self
            .cluster(COOPERATIVE_CLUSTER)
            .map(|c| c.speed)
            .unwrap_or(0.0);
        let farthest = self
            .agents
            .iter()
            .filter_map(|a| a.goal.map(|g| (g - a.position).norm()))
            .fold(0.0, f64::max);
        if speed <= 0.0 {
            return 1;
        }
        ((farthest / (speed * self.dt)).ceil() as usize).max(1) * 10
    }

    /// Clusters that navigate by their own flow field under this regime.
    pub fn navigating_clusters(&self) -> Vec<ClusterId> {
        match self.regime {
            Regime::Sncf => vec![HEALTHY_CLUSTER],
            Regime::Tvnc => vec![COOPERATIVE_CLUSTER],
            Regime::Tvc => {
                let mut ids: Vec<_> = self.clusters.iter().map(|c| c.id).collect();
                ids.sort_unstable();
                ids
            }
        }
    }

    /// Role an agent of `cluster` starts with under this regime.
    pub fn initial_role(regime: Regime, cluster: ClusterId) -> Role {
        match (regime, cluster) {
            (Regime::Sncf, FAULTY_CLUSTER) => Role::Faulty,
            (Regime::Tvnc, NONCOOPERATIVE_CLUSTER) => Role::NonCooperative,
            _ => Role::Cooperative,
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let mut issues = Vec::new();
        let mut schema = |field: &str, message: String| {
            issues.push(SpecIssue {
                kind: IssueKind::Schema,
                field: field.to_string(),
                message,
            })
        };

        if !self.t0.is_finite() {
            schema("t0", "must be finite".into());
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            schema("dt", format!("must be positive, got {}", self.dt));
        }
        if self.n_steps == Some(0) {
            schema("n_steps", "must be at least 1".into());
        }
        for (name, value) in [
            ("delta_h", self.delta_h),
            ("delta", self.delta),
            ("epsilon", self.epsilon),
        ] {
            if !(value.is_finite() && value > 0.0) {
                schema(name, format!("must be positive, got {value}"));
            }
        }
        if !(self.min_separation.is_finite() && self.min_separation >= 0.0) {
            schema("min_separation", "must be non-negative".into());
        }
        if self.n_tau == 0 {
            schema("n_tau", "must be at least 1".into());
        }
        if let Some(offset) = self.dividing_offset {
            if !offset.is_finite() {
                schema("dividing_offset", "must be finite".into());
            }
        }
        if self.agents.is_empty() {
            schema("agents", "at least one agent is required".into());
        }

        let mut ids = BTreeSet::new();
        for (i, agent) in self.agents.iter().enumerate() {
            if !ids.insert(agent.id) {
                schema(
                    &format!("agents[{i}].id"),
                    format!("duplicate agent id {}", agent.id),
                );
            }
            if !(agent.position.re.is_finite() && agent.position.im.is_finite()) {
                schema(&format!("agents[{i}].position"), "must be finite".into());
            }
            if let Some(goal) = agent.goal {
                if !(goal.re.is_finite() && goal.im.is_finite()) {
                    schema(&format!("agents[{i}].goal"), "must be finite".into());
                }
            }
            if self.cluster(agent.cluster).is_none() {
                schema(
                    &format!("agents[{i}].cluster"),
                    format!("cluster {} is not declared", agent.cluster),
                );
            }
        }

        let mut cluster_ids = BTreeSet::new();
        for (i, cluster) in self.clusters.iter().enumerate() {
            if !cluster_ids.insert(cluster.id) {
                schema(
                    &format!("clusters[{i}].id"),
                    format!("duplicate cluster id {}", cluster.id),
                );
            }
            if !(cluster.speed.is_finite() && cluster.speed >= 0.0) {
                schema(
                    &format!("clusters[{i}].speed"),
                    "must be non-negative".into(),
                );
            }
            if !cluster.heading.is_finite() {
                schema(&format!("clusters[{i}].heading"), "must be finite".into());
            }
            let declared: BTreeSet<AgentId> = self
                .agents
                .iter()
                .filter(|a| a.cluster == cluster.id)
                .map(|a| a.id)
                .collect();
            if declared != cluster.members {
                schema(
                    &format!("clusters[{i}].members"),
                    "does not match the agents assigned to the cluster".into(),
                );
            }
        }

        let end = self.n_steps.map(|n| self.time_of(n));
        for (i, event) in self.failures.iter().enumerate() {
            if !event.time.is_finite()
                || event.time < self.t0
                || end.is_some_and(|e| event.time > e)
            {
                schema(
                    &format!("failures[{i}].time"),
                    format!("{} is outside the simulated time span", event.time),
                );
            }
            if self.agent(event.agent_id).is_none() {
                schema(
                    &format!("failures[{i}].agent"),
                    format!("unknown agent {}", event.agent_id),
                );
            }
        }
        for (id, path) in &self.trajectories {
            let field = format!("trajectories.{id}");
            if self.agent(*id).is_none() {
                schema(&field, format!("unknown agent {id}"));
            }
            if path.waypoints().is_empty() {
                schema(&field, "needs at least one waypoint".into());
            }
            if path
                .waypoints()
                .iter()
                .any(|(t, z)| !(t.is_finite() && z.re.is_finite() && z.im.is_finite()))
            {
                schema(&field, "waypoints must be finite".into());
            }
            if path.waypoints().windows(2).any(|w| w[1].0 < w[0].0) {
                schema(&field, "waypoint times must be non-decreasing".into());
            }
        }

        self.validate_regime(&mut issues);
        if issues.is_empty() {
            Ok(())
        } else {
            Err(SpecError { issues })
        }
    }

    fn validate_regime(&self, issues: &mut Vec<SpecIssue>) {
        let mut regime = |field: &str, message: String| {
            issues.push(SpecIssue {
                kind: IssueKind::Regime,
                field: field.to_string(),
                message,
            })
        };
        let ids: BTreeSet<ClusterId> = self.clusters.iter().map(|c| c.id).collect();

        for (i, agent) in self.agents.iter().enumerate() {
            let expected = Self::initial_role(self.regime, agent.cluster);
            if agent.role != expected {
                regime(
                    &format!("agents[{i}].role"),
                    format!(
                        "{} agents of cluster {} must start {expected}",
                        self.regime, agent.cluster
                    ),
                );
            }
        }

        match self.regime {
            Regime::Sncf | Regime::Tvnc => {
                if ids != BTreeSet::from([1, 2]) {
                    regime(
                        "clusters",
                        format!(
                            "{} requires exactly m=2 clusters with ids 1 and 2",
                            self.regime
                        ),
                    );
                }
                if self.cluster(1).is_some_and(|c| c.members.is_empty()) {
                    regime("clusters", "cluster 1 has no agents".into());
                }
            }
            Regime::Tvc => {
                if self.clusters.len() < 2 {
                    regime("clusters", "TVC requires m>1 clusters".into());
                }
                if self.clusters.iter().any(|c| c.members.is_empty()) {
                    regime(
                        "clusters",
                        "every TVC cluster needs at least one agent".into(),
                    );
                }
            }
        }

        match self.regime {
            Regime::Sncf => {
                if self.n_steps.is_none() {
                    regime("n_steps", "SNCF runs need a fixed number of steps".into());
                }
                if !self.trajectories.is_empty() {
                    regime(
                        "trajectories",
                        "predefined trajectories are only used by TVNC".into(),
                    );
                }
                let mut failed = BTreeSet::new();
                for (i, event) in self.failures.iter().enumerate() {
                    let already = self
                        .agent(event.agent_id)
                        .is_some_and(|a| a.role == Role::Faulty);
                    if already || !failed.insert(event.agent_id) {
                        regime(
                            &format!("failures[{i}].agent"),
                            format!("agent {} is already faulty", event.agent_id),
                        );
                    }
                }
            }
            Regime::Tvnc => {
                if !self.failures.is_empty() {
                    regime(
                        "failures",
                        "TVNC keeps the partition fixed; failures are SNCF only".into(),
                    );
                }
                for (i, agent) in self.agents.iter().enumerate() {
                    match agent.cluster {
                        COOPERATIVE_CLUSTER if agent.goal.is_none() => regime(
                            &format!("agents[{i}].goal"),
                            "cooperative agents need a goal".into(),
                        ),
                        NONCOOPERATIVE_CLUSTER if !self.trajectories.contains_key(&agent.id) => {
                            regime(
                                &format!("agents[{i}]"),
                                "non-cooperative agents need a predefined trajectory".into(),
                            )
                        }
                        _ => {}
                    }
                }
                for id in self.trajectories.keys() {
                    if self
                        .agent(*id)
                        .is_some_and(|a| a.cluster != NONCOOPERATIVE_CLUSTER)
                    {
                        regime(
                            &format!("trajectories.{id}"),
                            "only non-cooperative agents follow predefined trajectories".into(),
                        );
                    }
                }
            }
            Regime::Tvc => {
                if self.n_steps.is_none() {
                    regime("n_steps", "TVC runs need a fixed number of steps".into());
                }
                if !self.failures.is_empty() {
                    regime("failures", "failures are SNCF only".into());
                }
                if !self.trajectories.is_empty() {
                    regime(
                        "trajectories",
                        "predefined trajectories are only used by TVNC".into(),
                    );
                }
                for (i, agent) in self.agents.iter().enumerate() {
                    if agent.goal.is_none() {
                        regime(
                            &format!("agents[{i}].goal"),
                            "TVC agents need a goal".into(),
                        );
                    }
                }
            }
        }
    }
}

/// Per-agent events attached to a log row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct EventFlags(u16);

impl EventFlags {
    /// The agent failed at this tick.
    pub const FAILED: Self = Self(1);
    /// Inversion failed; the step used the RK4 fallback.
    pub const FALLBACK: Self = Self(1 << 1);
    /// No step could be taken; the agent held its position.
    pub const HOLD: Self = Self(1 << 2);
    pub const STAGNATION: Self = Self(1 << 3);
    /// Within goal tolerance; not stepped.
    pub const ARRIVED: Self = Self(1 << 4);
    /// On the dividing streamline of a new cylinder.
    pub const DIVIDING: Self = Self(1 << 5);
    /// Inside an active cylinder.
    pub const INSIDE: Self = Self(1 << 6);
    /// The step produced a non-finite position and was discarded.
    pub const NON_FINITE: Self = Self(1 << 7);

    const NAMES: [(Self, &'static str); 8] = [
        (Self::FAILED, "failed"),
        (Self::FALLBACK, "fallback"),
        (Self::HOLD, "hold"),
        (Self::STAGNATION, "stagnation"),
        (Self::ARRIVED, "arrived"),
        (Self::DIVIDING, "dividing"),
        (Self::INSIDE, "inside"),
        (Self::NON_FINITE, "nonfinite"),
    ];

    pub fn empty() -> Self {
        Self(0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, other: Self) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    /// Flags from raw bits, dropping any that name no flag.
    pub fn from_bits_truncate(bits: u16) -> Self {
        Self(bits & Self::NAMES.iter().fold(0, |all, (flag, _)| all | flag.0))
    }
}

impl std::ops::BitOr for EventFlags {
    type Output = Self;

    fn bitor(self, rhs: Self) -> Self {
        Self(self.0 | rhs.0)
    }
}

impl std::ops::BitOrAssign for EventFlags {
    fn bitor_assign(&mut self, rhs: Self) {
        self.0 |= rhs.0;
    }
}

impl fmt::Display for EventFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (flag, name) in Self::NAMES {
            if self.contains(flag) {
                if !first {
                    f.write_str("|")?;
                }
                f.write_str(name)?;
                first = false;
            }
        }
        Ok(())
    }
}

impl FromStr for EventFlags {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut flags = Self::empty();
        for part in s.split('|').filter(|p| !p.is_empty()) {
            let (flag, _) = Self::NAMES
                .iter()
                .find(|(_, name)| *name == part)
                .ok_or_else(|| format!("unknown event flag `{part}`"))?;
            flags |= *flag;
        }
        Ok(flags)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentRecord {
    pub id: AgentId,
    pub cluster: ClusterId,
    pub position: Complex64,
    pub role: Role,
    /// Present for agents navigating by a field at this tick.
    pub potential: Option<PotentialStreamPair>,
    pub beta: Option<bool>,
    pub theta: Option<f64>,
    pub flags: EventFlags,
}

/// Agent states at `t_k` (before the step from `t_k`), with the field values
/// used for that step and the events it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub time: f64,
    pub agents: Vec<AgentRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickMetrics {
    pub min_inter_agent_distance: Option<f64>,
    pub min_cylinder_clearance: Option<f64>,
}

impl TickRecord {
    pub fn agent(&self, id: AgentId) -> Option<&AgentRecord> {
        self.agents.iter().find(|a| a.id == id)
    }

    /// Agent states as seen at this tick, for rebuilding fields.
    pub fn states(&self) -> Vec<AgentState> {
        self.agents
            .iter()
            .map(|r| AgentState::new(r.id, r.cluster, r.position, r.role))
            .collect()
    }

    /// Field cluster `cluster` navigated by at this tick, rebuilt from the
    /// logged heading, flag and foreign positions.
    pub fn field_of(&self, cluster: ClusterId, radius: f64) -> Option<FlowField> {
        let record = self
            .agents
            .iter()
            .find(|a| a.cluster == cluster && a.theta.is_some())?;
        let (theta, beta) = (record.theta?, record.beta?);
        let singularities = if beta {
            foreign_singularities(&self.states(), cluster, radius)
        } else {
            Vec::new()
        };
        FlowField::new(theta, beta, singularities).ok()
    }

    pub fn metrics(&self, radius: f64) -> TickMetrics {
        let mut min_distance: Option<f64> = None;
        for (i, a) in self.agents.iter().enumerate() {
            for b in &self.agents[i + 1..] {
                let d = (a.position - b.position).norm();
                min_distance = Some(min_distance.map_or(d, |m| m.min(d)));
            }
        }
        let mut min_clearance: Option<f64> = None;
        let mut fields: BTreeMap<ClusterId, Option<FlowField>> = BTreeMap::new();
        for record in self
            .agents
            .iter()
            .filter(|a| a.potential.is_some() || a.theta.is_some())
        {
            let field = fields
                .entry(record.cluster)
                .or_insert_with(|| self.field_of(record.cluster, radius));
            if let Some(c) = field
                .as_ref()
                .and_then(|f| f.min_clearance(record.position))
            {
                min_clearance = Some(min_clearance.map_or(c, |m| m.min(c)));
            }
        }
        TickMetrics {
            min_inter_agent_distance: min_distance,
            min_cylinder_clearance: min_clearance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub tick: usize,
    pub agent: AgentId,
    pub flags: EventFlags,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub ticks: Vec<TickRecord>,
}

impl TrajectoryLog {
    /// Every non-empty flag set, in tick then agent order.
    pub fn events(&self) -> Vec<Event> {
        self.ticks
            .iter()
            .enumerate()
            .flat_map(|(tick, record)| {
                record
                    .agents
                    .iter()
                    .filter(|a| !a.flags.is_empty())
                    .map(move |a| Event {
                        tick,
                        agent: a.id,
                        flags: a.flags,
                    })
            })
            .collect()
    }

    /// Ticks at which a failure forced the field to be rebuilt.
    pub fn failure_rebuilds(&self) -> Vec<usize> {
        self.ticks
            .iter()
            .enumerate()
            .filter(|(_, t)| {
                t.agents
                    .iter()
                    .any(|a| a.flags.contains(EventFlags::FAILED))
            })
            .map(|(k, _)| k)
            .collect()
    }

    pub fn positions_of(&self, id: AgentId) -> Vec<Complex64> {
        self.ticks
            .iter()
            .filter_map(|t| t.agent(id).map(|a| a.position))
            .collect()
    }
}

pub(crate) fn snapshot(
    time: f64,
    agents: &[AgentState],
    fields: &BTreeMap<ClusterId, FlowField>,
    flags: &BTreeMap<AgentId, EventFlags>,
) -> TickRecord {
    let records = agents
        .iter()
        .map(|agent| {
            let mut flag = flags.get(&agent.id).copied().unwrap_or_default();
            let field = fields.get(&agent.cluster);
            if field.is_some_and(|f| f.inside_cylinder(agent.position).is_some()) {
                flag |= EventFlags::INSIDE;
            }
            AgentRecord {
                id: agent.id,
                cluster: agent.cluster,
                position: agent.position,
                role: agent.role,
                potential: field.and_then(|f| f.eval(agent.position).ok()),
                beta: field.map(FlowField::beta),
                theta: field.map(FlowField::theta),
                flags: flag,
            }
        })
        .collect();
    TickRecord {
        time,
        agents: records,
    }
}

/// One step for one agent. Errors never escape: the agent holds and the
/// reason is flagged.
pub(crate) fn advance(
    z: Complex64,
    field: &FlowField,
    params: StepParams,
    psi_offset: f64,
) -> (Complex64, EventFlags) {
    if field.inside_cylinder(z).is_some() {
        return (z, EventFlags::HOLD | EventFlags::INSIDE);
    }
    match kinematics::streamline_step_with_offset(z, field, params, psi_offset) {
        Ok(step) if !(step.position.re.is_finite() && step.position.im.is_finite()) => {
            (z, EventFlags::HOLD | EventFlags::NON_FINITE)
        }
        Ok(step) => {
            let flags = match step.method {
                StepMethod::Inversion => EventFlags::empty(),
                StepMethod::Rk4Fallback => EventFlags::FALLBACK,
            };
            (step.position, flags)
        }
        Err(KinematicsError::StagnationPoint { .. }) => {
            (z, EventFlags::HOLD | EventFlags::STAGNATION)
        }
        Err(e) => {
            log::debug!("step from {z} failed: {e}");
            (z, EventFlags::HOLD)
        }
    }
}

/// Validate and run a scenario under its regime.
pub fn run(spec: &ScenarioSpec) -> Result<TrajectoryLog, RunError> {
    spec.validate()?;
    match spec.regime {
        Regime::Sncf => clusters::sncf_run(spec),
        Regime::Tvnc => guidance::tvnc_run(spec),
        Regime::Tvc => guidance::tvc_run(spec),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    /// A navigating agent is inside an active cylinder.
    CylinderBreach {
        clearance: f64,
    },
    /// Agents of different clusters came closer than the minimum separation.
    SeparationBreach {
        distance: f64,
    },
    NonFinitePosition,
    /// A faulty agent moved after its failure.
    FaultyMoved,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub tick: usize,
    pub agents: Vec<AgentId>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let agents = self
            .agents
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",");
        match &self.kind {
            ViolationKind::CylinderBreach { clearance } => write!(
                f,
                "tick {}: agent {agents} inside a cylinder (clearance {clearance:.6} m)",
                self.tick
            ),
            ViolationKind::SeparationBreach { distance } => write!(
                f,
                "tick {}: agents {agents} separated by {distance:.6} m",
                self.tick
            ),
            ViolationKind::NonFinitePosition => {
                write!(
                    f,
                    "tick {}: agent {agents} has a non-finite position",
                    self.tick
                )
            }
            ViolationKind::FaultyMoved => {
                write!(f, "tick {}: faulty agent {agents} moved", self.tick)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SafetyReport {
    pub ticks: usize,
    pub min_cylinder_clearance: Option<f64>,
    pub min_distance_within_clusters: Option<f64>,
    pub min_distance_across_clusters: Option<f64>,
    /// Largest `|psi_k(z_{k+1}) - psi_k(z_k)|` over ordinary steps.
    pub max_psi_drift: f64,
    /// Largest deviation of the potential advance from `speed * dt`.
    pub max_phi_error: f64,
    /// Largest mismatch between a logged `(phi, psi)` and its re-evaluation.
    pub max_reevaluation_error: f64,
    /// Distance to goal at the final tick, per agent with a goal.
    pub goal_residuals: BTreeMap<AgentId, f64>,
    pub fallback_counts: BTreeMap<AgentId, usize>,
    pub hold_counts: BTreeMap<AgentId, usize>,
    pub failure_rebuilds: usize,
    pub violations: Vec<Violation>,
}

impl SafetyReport {
    pub fn is_safe(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn goal_residual_sum(&self) -> f64 {
        self.goal_residuals.values().sum()
    }
}

fn min_opt(current: &mut Option<f64>, value: f64) {
    *current = Some(current.map_or(value, |m| m.min(value)));
}

/// Audit a log against the scenario it came from.
pub fn audit(log: &TrajectoryLog, spec: &ScenarioSpec) -> SafetyReport {
    let radius = spec.delta_h;
    let mut report = SafetyReport {
        ticks: log.ticks.len(),
        failure_rebuilds: log.failure_rebuilds().len(),
        ..SafetyReport::default()
    };
    let speed_of: BTreeMap<ClusterId, f64> =
        spec.clusters.iter().map(|c| (c.id, c.speed)).collect();
    let mut frozen_at: BTreeMap<AgentId, Complex64> = BTreeMap::new();

    for (k, tick) in log.ticks.iter().enumerate() {
        let fields: BTreeMap<ClusterId, FlowField> = spec
            .navigating_clusters()
            .into_iter()
            .filter_map(|c| tick.field_of(c, radius).map(|f| (c, f)))
            .collect();

        for record in &tick.agents {
            if !(record.position.re.is_finite() && record.position.im.is_finite()) {
                report.violations.push(Violation {
                    tick: k,
                    agents: vec![record.id],
                    kind: ViolationKind::NonFinitePosition,
                });
                continue;
            }
            if record.flags.contains(EventFlags::FALLBACK) {
                *report.fallback_counts.entry(record.id).or_default() += 1;
            }
            if record.flags.contains(EventFlags::HOLD) {
                *report.hold_counts.entry(record.id).or_default() += 1;
            }
            if record.role == Role::Faulty {
                match frozen_at.get(&record.id) {
                    Some(p) if *p != record.position => report.violations.push(Violation {
                        tick: k,
                        agents: vec![record.id],
                        kind: ViolationKind::FaultyMoved,
                    }),
                    Some(_) => {}
                    None => {
                        frozen_at.insert(record.id, record.position);
                    }
                }
            }

            let Some(field) = fields.get(&record.cluster) else {
                continue;
            };
            if let Some(clearance) = field.min_clearance(record.position) {
                min_opt(&mut report.min_cylinder_clearance, clearance);
                if clearance < -CLEARANCE_TOLERANCE {
                    report.violations.push(Violation {
                        tick: k,
                        agents: vec![record.id],
                        kind: ViolationKind::CylinderBreach { clearance },
                    });
                }
            }
            if let (Some(logged), Ok(fresh)) = (record.potential, field.eval(record.position)) {
                let err = (logged.phi - fresh.phi)
                    .abs()
                    .max((logged.psi - fresh.psi).abs());
                report.max_reevaluation_error = report.max_reevaluation_error.max(err);
            }

            let ordinary = !record.flags.contains(EventFlags::HOLD)
                && !record.flags.contains(EventFlags::ARRIVED)
                && !record.flags.contains(EventFlags::DIVIDING)
                && !record.flags.contains(EventFlags::FALLBACK);
            if let (true, Some(logged), Some(next)) = (
                ordinary,
                record.potential,
                log.ticks.get(k + 1).and_then(|t| t.agent(record.id)),
            ) {
                if let Ok(after) = field.eval(next.position) {
                    report.max_psi_drift = report.max_psi_drift.max((after.psi - logged.psi).abs());
                    if let Some(speed) = speed_of.get(&record.cluster) {
                        let advance = speed * spec.dt;
                        report.max_phi_error = report
                            .max_phi_error
                            .max((after.phi - logged.phi - advance).abs());
                    }
                }
            }
        }

        for (i, a) in tick.agents.iter().enumerate() {
            for b in &tick.agents[i + 1..] {
                let d = (a.position - b.position).norm();
                if !d.is_finite() {
                    continue;
                }
                if a.cluster == b.cluster {
                    min_opt(&mut report.min_distance_within_clusters, d);
                } else {
                    min_opt(&mut report.min_distance_across_clusters, d);
                    // Faulty agents are covered by their cylinders.
                    let faulty = a.role == Role::Faulty || b.role == Role::Faulty;
                    if !faulty && d < spec.min_separation {
                        report.violations.push(Violation {
                            tick: k,
                            agents: vec![a.id, b.id],
                            kind: ViolationKind::SeparationBreach { distance: d },
                        });
                    }
                }
            }
        }
    }

    if let Some(last) = log.ticks.last() {
        for record in &last.agents {
            if let Some(goal) = spec.agent(record.id).and_then(|a| a.goal) {
                if matches!(record.role, Role::Cooperative) {
                    report
                        .goal_residuals
                        .insert(record.id, (goal - record.position).norm());
                }
            }
        }
    }
    report
}
