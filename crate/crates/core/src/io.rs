//! File formats: TOML scenario files, CSV trajectory and grid tables, and
//! SVG plots.
//!
//! All lengths are meters, times seconds, angles radians. Floating-point
//! columns in the tables are written with 17 significant digits so they
//! parse back to the same bits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clusters::{AgentId, AgentState, ClusterId, FailureEvent, Role};
use crate::flow_field::{FlowField, PotentialStreamPair};
use crate::guidance::ClusterSpec;
use crate::sim::{
    AgentRecord, EventFlags, IssueKind, Regime, SafetyReport, ScenarioSpec, SpecError, TickRecord,
    Trajectory, TrajectoryLog, DEFAULT_DIVIDING_OFFSET, DEFAULT_MIN_SEPARATION,
};

pub const SCENARIO_VERSION: u32 = 1;

pub const TRAJECTORY_HEADER: [&str; 11] = [
    "t",
    "agent_id",
    "cluster",
    "x",
    "y",
    "phi",
    "psi",
    "beta",
    "theta",
    "role",
    "event_flags",
];

pub const GRID_HEADER: [&str; 5] = ["x", "y", "phi", "psi", "inside_disk"];

/// Process exit codes shared by every command-line entry point.
pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_INVALID_INPUT: i32 = 1;
pub const EXIT_UNSAFE: i32 = 2;

/// Exit code for an audited run: any violation is a failure, never a pass.
pub fn audit_exit_code(report: &SafetyReport) -> i32 {
    if report.is_safe() {
        EXIT_SUCCESS
    } else {
        EXIT_UNSAFE
    }
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error in `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("regime error in `{field}`: {message}")]
    Regime { field: String, message: String },
    #[error("malformed table row {row}: {message}")]
    Table { row: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Failures caused by the input file rather than the environment.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            IoError::Syntax { .. }
                | IoError::Schema { .. }
                | IoError::Regime { .. }
                | IoError::Table { .. }
        )
    }
}

impl From<SpecError> for IoError {
    fn from(err: SpecError) -> Self {
        // Schema problems are reported before regime problems.
        let issue = err
            .issues
            .iter()
            .find(|i| i.kind == IssueKind::Schema)
            .or_else(|| err.issues.first())
            .cloned()
            .expect("a spec error carries at least one issue");
        match issue.kind {
            IssueKind::Schema => IoError::Schema {
                field: issue.field,
                message: issue.message,
            },
            IssueKind::Regime => IoError::Regime {
                field: issue.field,
                message: issue.message,
            },
        }
    }
}

fn default_t0() -> f64 {
    0.0
}
fn default_delta() -> f64 {
    0.15
}
fn default_n_tau() -> usize {
    3
}
fn default_epsilon() -> f64 {
    0.05
}
fn default_min_separation() -> f64 {
    DEFAULT_MIN_SEPARATION
}
fn default_dividing_offset() -> f64 {
    DEFAULT_DIVIDING_OFFSET
}

/// On-disk scenario layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    pub regime: Regime,
    #[serde(default = "default_t0")]
    pub t0: f64,
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    pub delta_h: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_n_tau")]
    pub n_tau: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_min_separation")]
    pub min_separation: f64,
    /// Zero disables the shift (agents are only flagged).
    #[serde(default = "default_dividing_offset")]
    pub dividing_offset: f64,
    pub clusters: Vec<ClusterEntry>,
    pub agents: Vec<AgentEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<FailureEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trajectories: Vec<TrajectoryEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterEntry {
    pub id: ClusterId,
    pub speed: f64,
    #[serde(default)]
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    pub id: AgentId,
    pub cluster: ClusterId,
    pub position: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureEntry {
    pub time: f64,
    pub agent: AgentId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryEntry {
    pub agent: AgentId,
    /// `[t, x, y]` triples.
    pub waypoints: Vec<[f64; 3]>,
}

fn point([x, y]: [f64; 2]) -> Complex64 {
    Complex64::new(x, y)
}

impl ScenarioFile {
    pub fn into_spec(self) -> ScenarioSpec {
        let agents: Vec<AgentState> = self
            .agents
            .iter()
            .map(|a| AgentState {
                id: a.id,
                cluster: a.cluster,
                position: point(a.position),
                role: ScenarioSpec::initial_role(self.regime, a.cluster),
                goal: a.goal.map(point),
            })
            .collect();
        let clusters = self
            .clusters
            .iter()
            .map(|c| {
                ClusterSpec::new(c.id, c.speed, c.heading, self.epsilon)
                    .with_members(agents.iter().filter(|a| a.cluster == c.id).map(|a| a.id))
            })
            .collect();
        ScenarioSpec {
            name: self.name,
            regime: self.regime,
            t0: self.t0,
            dt: self.dt,
            n_steps: self.n_steps,
            agents,
            clusters,
            failures: self
                .failures
                .iter()
                .map(|f| FailureEvent {
                    time: f.time,
                    agent_id: f.agent,
                })
                .collect(),
            trajectories: self
                .trajectories
                .iter()
                .map(|t| {
                    (
                        t.agent,
                        Trajectory::new(
                            t.waypoints
                                .iter()
                                .map(|[t, x, y]| (*t, Complex64::new(*x, *y)))
                                .collect(),
                        ),
                    )
                })
                .collect(),
            delta_h: self.delta_h,
            delta: self.delta,
            n_tau: self.n_tau,
            epsilon: self.epsilon,
            min_separation: self.min_separation,
            dividing_offset: (self.dividing_offset != 0.0).then_some(self.dividing_offset),
        }
    }

    pub fn from_spec(spec: &ScenarioSpec) -> Self {
        let mut clusters: Vec<_> = spec
            .clusters
            .iter()
            .map(|c| ClusterEntry {
                id: c.id,
                speed: c.speed,
                heading: c.heading,
            })
            .collect();
        clusters.sort_by_key(|c| c.id);
        Self {
            version: SCENARIO_VERSION,
            name: spec.name.clone(),
            regime: spec.regime,
            t0: spec.t0,
            dt: spec.dt,
            n_steps: spec.n_steps,
            delta_h: spec.delta_h,
            delta: spec.delta,
            n_tau: spec.n_tau,
            epsilon: spec.epsilon,
            min_separation: spec.min_separation,
            dividing_offset: spec.dividing_offset.unwrap_or(0.0),
            clusters,
            agents: spec
                .agents
                .iter()
                .map(|a| AgentEntry {
                    id: a.id,
                    cluster: a.cluster,
                    position: [a.position.re, a.position.im],
                    goal: a.goal.map(|g| [g.re, g.im]),
                })
                .collect(),
            failures: spec
                .failures
                .iter()
                .map(|f| FailureEntry {
                    time: f.time,
                    agent: f.agent_id,
                })
                .collect(),
            trajectories: spec
                .trajectories
                .iter()
                .map(|(agent, path)| TrajectoryEntry {
                    agent: *agent,
                    waypoints: path
                        .waypoints()
                        .iter()
                        .map(|(t, z)| [*t, z.re, z.im])
                        .collect(),
                })
                .collect(),
        }
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn schema_field(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "<document>".to_string())
}

/// Parse and fully validate scenario text.
pub fn parse_scenario_str(text: &str) -> Result<ScenarioSpec, IoError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
        IoError::Syntax {
            line,
            column,
            message: e.message().trim().to_string(),
        }
    })?;
    let file = ScenarioFile::deserialize(table).map_err(|e| {
        let message = e.message().trim().to_string();
        IoError::Schema {
            field: schema_field(&message),
            message,
        }
    })?;
    if file.version != SCENARIO_VERSION {
        return Err(IoError::Schema {
            field: "version".into(),
            message: format!(
                "unsupported version {}, expected {SCENARIO_VERSION}",
                file.version
            ),
        });
    }
    let spec = file.into_spec();
    spec.validate()?;
    Ok(spec)
}

pub fn parse_scenario(path: impl AsRef<Path>) -> Result<ScenarioSpec, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_scenario_str(&text)
}

pub fn serialize_scenario(spec: &ScenarioSpec) -> String {
    toml::to_string(&ScenarioFile::from_spec(spec)).expect("scenario files always serialize")
}

pub fn write_scenario(spec: &ScenarioSpec, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    fs::write(path, serialize_scenario(spec)).map_err(|e| IoError::io(path, e))
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_f64(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn trajectory_rows(log: &TrajectoryLog) -> impl Iterator<Item = [String; 11]> + '_ {
    log.ticks.iter().flat_map(|tick| {
        tick.agents.iter().map(move |a| {
            [
                fmt_f64(tick.time),
                a.id.to_string(),
                a.cluster.to_string(),
                fmt_f64(a.position.re),
                fmt_f64(a.position.im),
                opt_f64(a.potential.map(|p| p.phi)),
                opt_f64(a.potential.map(|p| p.psi)),
                a.beta.map(|b| u8::from(b).to_string()).unwrap_or_default(),
                opt_f64(a.theta),
                a.role.to_string(),
                a.flags.to_string(),
            ]
        })
    })
}

pub fn trajectory_to_bytes(log: &TrajectoryLog) -> Result<Vec<u8>, IoError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(TRAJECTORY_HEADER)?;
    for row in trajectory_rows(log) {
        writer.write_record(&row)?;
    }
    writer
        .into_inner()
        .map_err(|e| IoError::Csv(csv::Error::from(e.into_error())))
}

pub fn write_trajectory(log: &TrajectoryLog, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    let bytes = trajectory_to_bytes(log)?;
    fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}

fn parse_f64(row: usize, column: &str, text: &str) -> Result<f64, IoError> {
    text.parse().map_err(|_| IoError::Table {
        row,
        message: format!("column `{column}`: `{text}` is not a number"),
    })
}

fn parse_opt_f64(row: usize, column: &str, text: &str) -> Result<Option<f64>, IoError> {
    if text.is_empty() {
        Ok(None)
    } else {
        parse_f64(row, column, text).map(Some)
    }
}

fn parse_int<T: std::str::FromStr>(row: usize, column: &str, text: &str) -> Result<T, IoError> {
    text.parse().map_err(|_| IoError::Table {
        row,
        message: format!("column `{column}`: `{text}` is not an integer"),
    })
}

pub fn trajectory_from_bytes(bytes: &[u8]) -> Result<TrajectoryLog, IoError> {
    let mut reader = csv::Reader::from_reader(bytes);
    let header = reader.headers()?.clone();
    if header.iter().ne(TRAJECTORY_HEADER) {
        return Err(IoError::Table {
            row: 0,
            message: format!("expected header `{}`", TRAJECTORY_HEADER.join(",")),
        });
    }
    let mut log = TrajectoryLog::default();
    let mut last_time: Option<String> = None;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let field = |n: usize| record.get(n).unwrap_or("");
        let potential = match (
            parse_opt_f64(row, "phi", field(5))?,
            parse_opt_f64(row, "psi", field(6))?,
        ) {
            (Some(phi), Some(psi)) => Some(PotentialStreamPair::new(phi, psi)),
            (None, None) => None,
            _ => {
                return Err(IoError::Table {
                    row,
                    message: "phi and psi must be both present or both empty".into(),
                })
            }
        };
        let beta = match field(7) {
            "" => None,
            "0" => Some(false),
            "1" => Some(true),
            other => {
                return Err(IoError::Table {
                    row,
                    message: format!("column `beta`: `{other}` is not 0 or 1"),
                })
            }
        };
        let agent = AgentRecord {
            id: parse_int(row, "agent_id", field(1))?,
            cluster: parse_int(row, "cluster", field(2))?,
            position: Complex64::new(
                parse_f64(row, "x", field(3))?,
                parse_f64(row, "y", field(4))?,
            ),
            role: field(9)
                .parse::<Role>()
                .map_err(|message| IoError::Table { row, message })?,
            potential,
            beta,
            theta: parse_opt_f64(row, "theta", field(8))?,
            flags: field(10)
                .parse::<EventFlags>()
                .map_err(|message| IoError::Table { row, message })?,
        };
        if last_time.as_deref() != Some(field(0)) {
            log.ticks.push(TickRecord {
                time: parse_f64(row, "t", field(0))?,
                agents: Vec::new(),
            });
            last_time = Some(field(0).to_string());
        }
        log.ticks
            .last_mut()
            .expect("a tick was just pushed")
            .agents
            .push(agent);
    }
    Ok(log)
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<TrajectoryLog, IoError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| IoError::io(path, e))?;
    trajectory_from_bytes(&bytes)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub x: f64,
    pub y: f64,
    /// NaN where the field is undefined (a singularity center).
    pub phi: f64,
    pub psi: f64,
    pub inside_disk: bool,
}

/// Sample `phi` and `psi` on a `resolution x resolution` lattice, row by row
/// from `y_min`.
pub fn dump_field_grid(field: &FlowField, bounds: Bounds, resolution: usize) -> Vec<GridPoint> {
    assert!(resolution >= 2, "grid resolution must be at least 2");
    let step = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (resolution - 1) as f64;
    let mut points = Vec::with_capacity(resolution * resolution);
    for j in 0..resolution {
        let y = step(bounds.y_min, bounds.y_max, j);
        for i in 0..resolution {
            let x = step(bounds.x_min, bounds.x_max, i);
            let z = Complex64::new(x, y);
            let (phi, psi) = field
                .eval(z)
                .map_or((f64::NAN, f64::NAN), |p| (p.phi, p.psi));
            points.push(GridPoint {
                x,
                y,
                phi,
                psi,
                inside_disk: field.inside_cylinder(z).is_some() || phi.is_nan(),
            });
        }
    }
    points
}

pub fn grid_to_bytes(points: &[GridPoint]) -> Result<Vec<u8>, IoError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(GRID_HEADER)?;
    for p in points {
        writer.write_record([
            fmt_f64(p.x),
            fmt_f64(p.y),
            fmt_f64(p.phi),
            fmt_f64(p.psi),
            u8::from(p.inside_disk).to_string(),
        ])?;
    }
    writer
        .into_inner()
        .map_err(|e| IoError::Csv(csv::Error::from(e.into_error())))
}

pub fn write_grid(points: &[GridPoint], path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    let bytes = grid_to_bytes(points)?;
    fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}

/// Field cluster `cluster` navigates by at time `t`, rebuilt from a log.
pub fn field_at(
    log: &TrajectoryLog,
    spec: &ScenarioSpec,
    cluster: ClusterId,
    t: f64,
) -> Option<FlowField> {
    let tick = log
        .ticks
        .iter()
        .min_by(|a, b| (a.time - t).abs().total_cmp(&(b.time - t).abs()))?;
    tick.field_of(cluster, spec.delta_h)
}

const PALETTE: [&str; 10] = [
    "#d62728", "#1f77b4", "#e377c2", "#2ca02c", "#17becf", "#000000", "#ff7f0e", "#9467bd",
    "#8c564b", "#bcbd22",
];
const CANVAS: f64 = 800.0;
const MARGIN: f64 = 40.0;
const LEGEND_WIDTH: f64 = 140.0;

struct View {
    x_min: f64,
    y_max: f64,
    scale: f64,
}

impl View {
    fn x(&self, x: f64) -> f64 {
        MARGIN + (x - self.x_min) * self.scale
    }

    fn y(&self, y: f64) -> f64 {
        MARGIN + (self.y_max - y) * self.scale
    }
}

/// SVG document: one polyline per agent, shaded unsafe zones around faulty
/// agents, dashed start-to-goal lines, goal markers and a legend.
pub fn render_plot_svg(log: &TrajectoryLog, spec: &ScenarioSpec) -> String {
    let mut ids: Vec<AgentId> = log
        .ticks
        .iter()
        .flat_map(|t| t.agents.iter().map(|a| a.id))
        .collect();
    ids.sort_unstable();
    ids.dedup();

    let paths: BTreeMap<AgentId, Vec<Complex64>> =
        ids.iter().map(|id| (*id, log.positions_of(*id))).collect();
    let zones: Vec<Complex64> = log
        .ticks
        .last()
        .map(|t| {
            t.agents
                .iter()
                .filter(|a| a.role == Role::Faulty)
                .map(|a| a.position)
                .collect()
        })
        .unwrap_or_default();
    let goals: Vec<(AgentId, Complex64)> = spec
        .agents
        .iter()
        .filter_map(|a| a.goal.map(|g| (a.id, g)))
        .collect();

    let mut x_lo = f64::INFINITY;
    let mut x_hi = f64::NEG_INFINITY;
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    let mut extend = |z: Complex64, r: f64| {
        if z.re.is_finite() && z.im.is_finite() {
            x_lo = x_lo.min(z.re - r);
            x_hi = x_hi.max(z.re + r);
            y_lo = y_lo.min(z.im - r);
            y_hi = y_hi.max(z.im + r);
        }
    };
    paths.values().flatten().for_each(|z| extend(*z, 0.0));
    zones.iter().for_each(|z| extend(*z, spec.delta_h));
    goals.iter().for_each(|(_, g)| extend(*g, 0.0));
    if !x_lo.is_finite() {
        (x_lo, x_hi, y_lo, y_hi) = (0.0, 1.0, 0.0, 1.0);
    }
    let span = (x_hi - x_lo).max(y_hi - y_lo).max(1e-6);
    let view = View {
        x_min: x_lo,
        y_max: y_hi,
        scale: (CANVAS - 2.0 * MARGIN) / span,
    };
    let width = CANVAS + LEGEND_WIDTH;
    let height = 2.0 * MARGIN + (y_hi - y_lo) * view.scale;
    let color = |id: AgentId| PALETTE[(id as usize).wrapping_sub(1) % PALETTE.len()];

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r##"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">
<title>{}</title>
<rect x="0" y="0" width="{width:.0}" height="{height:.0}" fill="#ffffff"/>"##,
        escape(&format!("{} ({})", spec.name, spec.regime))
    );

    for zone in &zones {
        let _ = writeln!(
            svg,
            r##"<circle class="unsafe-zone" data-radius="{}" cx="{:.4}" cy="{:.4}" r="{:.4}" fill="#2ca02c" fill-opacity="0.3" stroke="#2ca02c" stroke-width="1"/>"##,
            spec.delta_h,
            view.x(zone.re),
            view.y(zone.im),
            spec.delta_h * view.scale
        );
    }
    for (id, goal) in &goals {
        if let Some(start) = paths.get(id).and_then(|p| p.first()) {
            let _ = writeln!(
                svg,
                r#"<line class="desired" x1="{:.4}" y1="{:.4}" x2="{:.4}" y2="{:.4}" stroke="{}" stroke-width="1" stroke-dasharray="6 4"/>"#,
                view.x(start.re),
                view.y(start.im),
                view.x(goal.re),
                view.y(goal.im),
                color(*id)
            );
        }
    }
    for (id, path) in &paths {
        let points = path
            .iter()
            .filter(|z| z.re.is_finite() && z.im.is_finite())
            .map(|z| format!("{:.4},{:.4}", view.x(z.re), view.y(z.im)))
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(
            svg,
            r#"<polyline class="path" data-agent="{id}" points="{points}" fill="none" stroke="{}" stroke-width="2"/>"#,
            color(*id)
        );
    }
    for (id, goal) in &goals {
        let (x, y) = (view.x(goal.re), view.y(goal.im));
        let _ = writeln!(
            svg,
            r#"<rect class="goal" x="{:.4}" y="{:.4}" width="8" height="8" fill="{}"/>"#,
            x - 4.0,
            y - 4.0,
            color(*id)
        );
    }
    for (row, id) in ids.iter().enumerate() {
        let y = MARGIN + 20.0 * row as f64;
        let _ = writeln!(
            svg,
            r#"<line class="legend" x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{}" stroke-width="3"/>
<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12">agent {id}</text>"#,
            CANVAS,
            CANVAS + 30.0,
            color(*id),
            CANVAS + 36.0,
            y + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn render_plot(
    log: &TrajectoryLog,
    spec: &ScenarioSpec,
    path: impl AsRef<Path>,
) -> Result<(), IoError> {
    let path = path.as_ref();
    fs::write(path, render_plot_svg(log, spec)).map_err(|e| IoError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow_field::Singularity;

    const MINIMAL_SNCF: &str = r#"
version = 1
name = "minimal"
regime = "sncf"
dt = 0.1
n_steps = 10
delta_h = 0.4

[[clusters]]
id = 1
speed = 0.3

[[clusters]]
id = 2
speed = 0.0

[[agents]]
id = 1
cluster = 1
position = [0.0, 0.0]

[[agents]]
id = 2
cluster = 1
position = [0.0, 1.0]

[[failures]]
time = 0.5
agent = 2
"#;

    #[test]
    fn minimal_sncf_file_is_valid() {
        let spec = parse_scenario_str(MINIMAL_SNCF).unwrap();
        assert_eq!(spec.regime, Regime::Sncf);
        assert_eq!(spec.agents.len(), 2);
        assert_eq!(spec.failures.len(), 1);
        assert_eq!(spec.delta, 0.15);
        assert_eq!(spec.dividing_offset, Some(DEFAULT_DIVIDING_OFFSET));
    }

    #[test]
    fn negative_dt_is_a_schema_error() {
        let text = MINIMAL_SNCF.replace("dt = 0.1", "dt = -0.1");
        match parse_scenario_str(&text) {
            Err(IoError::Schema { field, .. }) => assert_eq!(field, "dt"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL_SNCF.replace("delta_h = 0.4", "delta_h = 0.4\nspeedup = 2");
        match parse_scenario_str(&text) {
            Err(IoError::Schema { field, .. }) => assert_eq!(field, "speedup"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_a_location() {
        let text = MINIMAL_SNCF.replace("dt = 0.1", "dt = = 0.1");
        match parse_scenario_str(&text) {
            Err(IoError::Syntax { line, column, .. }) => {
                assert_eq!(line, 5);
                assert!(column > 1);
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn single_cluster_tvc_is_a_regime_error() {
        let text = r#"
version = 1
regime = "tvc"
dt = 0.1
n_steps = 10
delta_h = 0.1

[[clusters]]
id = 1
speed = 0.3

[[agents]]
id = 1
cluster = 1
position = [0.0, 0.0]
goal = [1.0, 0.0]
"#;
        match parse_scenario_str(text) {
            Err(IoError::Regime { message, .. }) => assert!(message.contains("m>1"), "{message}"),
            other => panic!("expected regime error, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_version() {
        let text = MINIMAL_SNCF.replace("version = 1", "version = 2");
        assert!(matches!(
            parse_scenario_str(&text),
            Err(IoError::Schema { field, .. }) if field == "version"
        ));
    }

    #[test]
    fn identity_grid() {
        let field = FlowField::uniform(0.0).unwrap();
        let bounds = Bounds {
            x_min: 0.0,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
        };
        let grid = dump_field_grid(&field, bounds, 2);
        assert_eq!(grid.len(), 4);
        for p in grid {
            assert_eq!((p.phi, p.psi), (p.x, p.y));
            assert!(!p.inside_disk);
        }
    }

    #[test]
    fn cylinder_boundary_points_on_grid_have_zero_stream_value() {
        let field = FlowField::new(
            0.0,
            true,
            vec![Singularity::new(Complex64::new(0.0, 0.0), 1.0).unwrap()],
        )
        .unwrap();
        let bounds = Bounds {
            x_min: -2.0,
            x_max: 2.0,
            y_min: -2.0,
            y_max: 2.0,
        };
        let grid = dump_field_grid(&field, bounds, 5);
        let on_circle: Vec<_> = grid
            .iter()
            .filter(|p| ((p.x * p.x + p.y * p.y).sqrt() - 1.0).abs() < 1e-12)
            .collect();
        assert_eq!(on_circle.len(), 4);
        for p in on_circle {
            assert!(p.psi.abs() < 1e-15);
            assert!(!p.inside_disk);
        }
        let center = grid.iter().find(|p| p.x == 0.0 && p.y == 0.0).unwrap();
        assert!(center.inside_disk && center.phi.is_nan());
    }
}
