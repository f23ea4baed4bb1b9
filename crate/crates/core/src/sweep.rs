//! Full pipeline runs and one-axis parameter sweeps over them.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::exec::{Executor, Sequential};
use crate::flow::{solve_flow, FlowBoundaryConditions, FlowField, FluidProperties};
use crate::geometry::{build_geometry, rasterize, ChannelGeometry, GeometryParams};
use crate::metrics::{compute_metrics, FocusingMetrics};
use crate::tracer::{
    default_population, sample_population, trace_population, CellSpecies, IntegrationOptions,
    Particle, ParticleModel, Placement, ReleaseMode, ReleaseRegion, Trajectory,
};
use crate::{Error, Result};

/// How the flow grid spacing is chosen for a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resolution {
    /// `h = Y / n`.
    CellsAcross(u32),
    /// Fixed spacing in um.
    Spacing(f64),
}

impl Resolution {
    pub fn spacing_um(&self, main_width_um: f64) -> Result<f64> {
        match *self {
            Resolution::CellsAcross(n) if n > 0 => Ok(main_width_um / n as f64),
            Resolution::CellsAcross(_) => {
                Err(Error::invalid("resolution", "cell count must be > 0"))
            }
            Resolution::Spacing(h) if h > 0.0 && h.is_finite() => Ok(h),
            Resolution::Spacing(_) => Err(Error::invalid("grid_spacing_um", "must be > 0")),
        }
    }
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution::CellsAcross(16)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracerSettings {
    pub particles: usize,
    pub seed: u64,
    /// Step (inertial) or maximum step (tracer), s.
    pub dt_s: f64,
    /// Integration window after release; derived from the geometry and
    /// inlet speeds when `None`.
    pub t_max_s: Option<f64>,
    pub model: ParticleModel,
    pub release: ReleaseMode,
    pub placement: Placement,
}

impl Default for TracerSettings {
    fn default() -> Self {
        TracerSettings {
            particles: 60,
            seed: 1,
            dt_s: 0.05,
            t_max_s: None,
            model: ParticleModel::Tracer,
            release: ReleaseMode::Batch,
            placement: Placement::Random,
        }
    }
}

/// Everything one rasterize, solve, trace, measure run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub geometry: GeometryParams,
    pub fluid: FluidProperties,
    pub flow: FlowBoundaryConditions,
    pub species: Vec<CellSpecies>,
    pub tracer: TracerSettings,
    pub resolution: Resolution,
}

impl PipelineConfig {
    /// Final design with the default population.
    pub fn final_design() -> Self {
        PipelineConfig {
            geometry: GeometryParams::final_design(),
            fluid: FluidProperties::default(),
            flow: FlowBoundaryConditions {
                v1_um_per_s: 500.0,
                v2_um_per_s: 5000.0,
            },
            species: default_population(),
            tracer: TracerSettings::default(),
            resolution: Resolution::default(),
        }
    }

    /// Sets a scalar by its configuration key. The four table axes are
    /// also accepted by their short names `X1`, `V1`, `V2`, `Y`.
    pub fn set_scalar(&mut self, key: &str, value: f64) -> Result<()> {
        let g = &mut self.geometry;
        match key {
            "X1" | "junction_um" => g.junction_um = value,
            "Y" | "main_width_um" => g.main_width_um = value,
            "V1" | "v1_um_per_s" => self.flow.v1_um_per_s = value,
            "V2" | "v2_um_per_s" => self.flow.v2_um_per_s = value,
            "X" | "main_length_um" => g.main_length_um = value,
            "alpha" | "sheath_angle_deg" => g.sheath_angle_deg = value,
            "electrode_um" => g.electrode_um = Some(value),
            "side_width_um" => g.side_width_um = Some(value),
            "side_length_um" => g.side_length_um = Some(value),
            "viscosity_pa_s" => self.fluid.viscosity_pa_s = value,
            "density_kg_per_m3" => self.fluid.density_kg_per_m3 = value,
            "dt_s" => self.tracer.dt_s = value,
            "t_max_s" => self.tracer.t_max_s = Some(value),
            "grid_spacing_um" => self.resolution = Resolution::Spacing(value),
            _ => return Err(Error::invalid(key, "not a sweepable scalar")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<ChannelGeometry> {
        let geom = build_geometry(&self.geometry)?;
        self.fluid.validate()?;
        self.flow.validate()?;
        if self.species.is_empty() {
            return Err(Error::EmptySpeciesList);
        }
        for s in &self.species {
            s.validate()?;
        }
        if self.tracer.particles == 0 {
            return Err(Error::invalid("particles", "must be > 0"));
        }
        if !(self.tracer.dt_s > 0.0) {
            return Err(Error::invalid("dt_s", "must be > 0"));
        }
        if let Some(t) = self.tracer.t_max_s {
            if !(t > 0.0) {
                return Err(Error::invalid("t_max_s", "must be > 0"));
            }
        }
        self.resolution.spacing_um(geom.main_width_um())?;
        Ok(geom)
    }

    /// Integration window: ten times the plug-flow transit time.
    pub fn integration_window_s(&self, geom: &ChannelGeometry) -> f64 {
        if let Some(t) = self.tracer.t_max_s {
            return t;
        }
        let y = geom.main_width_um();
        let v1 = self.flow.v1_um_per_s;
        let down = (v1 * y + 2.0 * self.flow.v2_um_per_s * geom.side_width_um()) / y;
        let x1 = geom.junction_um();
        10.0 * (x1 / v1 + (geom.main_length_um() - x1) / down)
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub geometry: ChannelGeometry,
    pub flow: FlowField,
    pub particles: Vec<Particle>,
    pub trajectories: Vec<Trajectory>,
    pub metrics: FocusingMetrics,
}

/// Builds the flow field for `cfg`.
pub fn solve_pipeline_flow(cfg: &PipelineConfig) -> Result<(ChannelGeometry, FlowField)> {
    let geom = cfg.validate()?;
    let h = cfg.resolution.spacing_um(geom.main_width_um())?;
    let grid = rasterize(&geom, h)?;
    let flow = solve_flow(&grid, &cfg.fluid, &cfg.flow, geom.side_width_um())?;
    Ok((geom, flow))
}

/// Rasterize, solve, trace and measure. Particles are distributed over
/// `exec`.
pub fn run_pipeline<E: Executor>(cfg: &PipelineConfig, exec: &E) -> Result<PipelineOutput> {
    let (geom, flow) = solve_pipeline_flow(cfg)?;
    let region = ReleaseRegion::main_inlet(
        &geom,
        &cfg.species,
        cfg.tracer.release,
        cfg.tracer.placement,
    )?;
    let particles =
        sample_population(&cfg.species, cfg.tracer.particles, cfg.tracer.seed, &region)?;
    let opts = IntegrationOptions {
        dt_s: cfg.tracer.dt_s,
        t_max_s: cfg.integration_window_s(&geom),
        model: cfg.tracer.model,
        electrode_x_um: Some(geom.electrode_um()),
        fluid: cfg.fluid,
    };
    let trajectories = trace_population(&particles, &flow, &opts, exec)?;
    let metrics = compute_metrics(&trajectories, &geom)?;
    Ok(PipelineOutput {
        geometry: geom,
        flow,
        particles,
        trajectories,
        metrics,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: PipelineConfig,
    pub parameter: String,
    pub values: Vec<f64>,
    pub particles: usize,
    pub seed: u64,
    pub replicates: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::invalid("values", "at least one value is required"));
        }
        if self.values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("values", "must be strictly increasing"));
        }
        if self.replicates == 0 {
            return Err(Error::invalid("replicates", "must be >= 1"));
        }
        if self.particles == 0 {
            return Err(Error::invalid("particles", "must be > 0"));
        }
        let mut probe = self.base.clone();
        probe.set_scalar(&self.parameter, self.values[0])?;
        Ok(())
    }

    /// Configuration of one sweep point and replicate. Replicate `r` uses
    /// seed `seed + r`.
    pub fn point_config(&self, value: f64, replicate: usize) -> Result<PipelineConfig> {
        let mut cfg = self.base.clone();
        cfg.set_scalar(&self.parameter, value)?;
        cfg.tracer.particles = self.particles;
        cfg.tracer.seed = self.seed.wrapping_add(replicate as u64);
        Ok(cfg)
    }
}

/// Spread of a metric over replicates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spread {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowStatus {
    Ok,
    Failed(Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub status: RowStatus,
    /// Replicate mean; `dx_min_um` averages the replicates where it is
    /// present.
    pub metrics: Option<FocusingMetrics>,
    pub dy_max_spread: Option<Spread>,
    pub dx_min_spread: Option<Spread>,
    pub t_spread: Option<Spread>,
}

impl SweepRow {
    pub fn ok(value: f64, metrics: FocusingMetrics) -> Self {
        let one = |v: f64| Some(Spread { min: v, max: v });
        SweepRow {
            value,
            status: RowStatus::Ok,
            metrics: Some(metrics),
            dy_max_spread: one(metrics.dy_max_um),
            dx_min_spread: metrics.dx_min_um.and_then(one),
            t_spread: one(metrics.t_s),
        }
    }

    pub fn failed(value: f64, err: Error) -> Self {
        SweepRow {
            value,
            status: RowStatus::Failed(err),
            metrics: None,
            dy_max_spread: None,
            dx_min_spread: None,
            t_spread: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == RowStatus::Ok
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub parameter: String,
    pub rows: Vec<SweepRow>,
}

fn spread(values: &[f64]) -> Option<Spread> {
    let first = *values.first()?;
    Some(values.iter().fold(
        Spread {
            min: first,
            max: first,
        },
        |s, &v| Spread {
            min: s.min.min(v),
            max: s.max.max(v),
        },
    ))
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn summarize(value: f64, reps: Vec<Result<FocusingMetrics>>) -> SweepRow {
    let mut ok = Vec::with_capacity(reps.len());
    for r in reps {
        match r {
            Ok(m) => ok.push(m),
            Err(e) => return SweepRow::failed(value, e),
        }
    }
    if ok.len() == 1 {
        return SweepRow::ok(value, ok[0]);
    }
    let dy: Vec<f64> = ok.iter().map(|m| m.dy_max_um).collect();
    let dx: Vec<f64> = ok.iter().filter_map(|m| m.dx_min_um).collect();
    let t: Vec<f64> = ok.iter().map(|m| m.t_s).collect();
    SweepRow {
        value,
        status: RowStatus::Ok,
        metrics: Some(FocusingMetrics {
            dy_max_um: mean(&dy).unwrap_or_default(),
            dx_min_um: mean(&dx),
            t_s: mean(&t).unwrap_or_default(),
        }),
        dy_max_spread: spread(&dy),
        dx_min_spread: spread(&dx),
        t_spread: spread(&t),
    }
}

/// Runs every (value, replicate) job on `exec`. Each job is an isolated
/// pipeline run; a failing job marks its row FAILED without stopping the
/// others.
pub fn run_sweep<E: Executor>(spec: &SweepSpec, exec: &E) -> Result<SweepResult> {
    spec.validate()?;
    let reps = spec.replicates;
    let jobs = spec.values.len() * reps;
    let mut outcomes = exec
        .map_indexed(jobs, |k| {
            let value = spec.values[k / reps];
            spec.point_config(value, k % reps)
                .and_then(|cfg| run_pipeline(&cfg, &Sequential))
                .map(|out| out.metrics)
        })
        .into_iter();
    let rows = spec
        .values
        .iter()
        .map(|&v| summarize(v, outcomes.by_ref().take(reps).collect()))
        .collect();
    Ok(SweepResult {
        parameter: spec.parameter.clone(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    DyMax,
    DxMin,
    T,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::DyMax, Metric::DxMin, Metric::T];

    pub fn name(self) -> &'static str {
        match self {
            Metric::DyMax => "dy_max",
            Metric::DxMin => "dx_min",
            Metric::T => "T",
        }
    }

    pub fn of(self, m: &FocusingMetrics) -> Option<f64> {
        match self {
            Metric::DyMax => Some(m.dy_max_um),
            Metric::DxMin => m.dx_min_um,
            Metric::T => Some(m.t_s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Increasing,
    Decreasing,
    NonIncreasing,
    NonDecreasing,
    None,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Increasing => "INCREASING",
            Direction::Decreasing => "DECREASING",
            Direction::NonIncreasing => "NON_INCREASING",
            Direction::NonDecreasing => "NON_DECREASING",
            Direction::None => "NONE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "INCREASING" => Direction::Increasing,
            "DECREASING" => Direction::Decreasing,
            "NON_INCREASING" => Direction::NonIncreasing,
            "NON_DECREASING" => Direction::NonDecreasing,
            "NONE" => Direction::None,
            _ => return None,
        })
    }

    fn is_strict(self) -> bool {
        matches!(self, Direction::Increasing | Direction::Decreasing)
    }

    fn holds(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Increasing => b > a,
            Direction::Decreasing => b < a,
            Direction::NonIncreasing => b <= a,
            Direction::NonDecreasing => b >= a,
            Direction::None => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrendExpectation {
    dy_max: Direction,
    dx_min: Direction,
    t: Direction,
}

impl TrendExpectation {
    pub fn new(dy_max: Direction, dx_min: Direction, t: Direction) -> Result<Self> {
        if [dy_max, dx_min, t].iter().all(|d| *d == Direction::None) {
            return Err(Error::invalid(
                "trend",
                "at least one metric needs a direction",
            ));
        }
        Ok(TrendExpectation { dy_max, dx_min, t })
    }

    pub fn direction(&self, m: Metric) -> Direction {
        match m {
            Metric::DyMax => self.dy_max,
            Metric::DxMin => self.dx_min,
            Metric::T => self.t,
        }
    }

    /// Expected behavior of each table axis as the parameter grows.
    pub fn for_axis(parameter: &str) -> Option<Self> {
        use Direction::*;
        let (dy, dx, t) = match parameter {
            "X1" | "junction_um" => (None, Increasing, Increasing),
            "V1" | "v1_um_per_s" => (None, Increasing, Decreasing),
            "V2" | "v2_um_per_s" => (Decreasing, Increasing, NonIncreasing),
            "Y" | "main_width_um" => (Increasing, Increasing, None),
            _ => return Option::None,
        };
        Self::new(dy, dx, t).ok()
    }
}

/// Shape actually seen in a metric column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observed {
    Increasing,
    Decreasing,
    NonIncreasing,
    NonDecreasing,
    Constant,
    Mixed,
    /// Fewer than two usable rows.
    Insufficient,
}

impl Observed {
    pub fn name(self) -> &'static str {
        match self {
            Observed::Increasing => "INCREASING",
            Observed::Decreasing => "DECREASING",
            Observed::NonIncreasing => "NON_INCREASING",
            Observed::NonDecreasing => "NON_DECREASING",
            Observed::Constant => "CONSTANT",
            Observed::Mixed => "MIXED",
            Observed::Insufficient => "INSUFFICIENT",
        }
    }

    fn of(values: &[f64]) -> Self {
        if values.len() < 2 {
            return Observed::Insufficient;
        }
        let pairs = || values.windows(2);
        let up = pairs().all(|w| w[1] > w[0]);
        let down = pairs().all(|w| w[1] < w[0]);
        let flat = pairs().all(|w| w[1] == w[0]);
        let nondec = pairs().all(|w| w[1] >= w[0]);
        let noninc = pairs().all(|w| w[1] <= w[0]);
        match () {
            _ if flat => Observed::Constant,
            _ if up => Observed::Increasing,
            _ if down => Observed::Decreasing,
            _ if nondec => Observed::NonDecreasing,
            _ if noninc => Observed::NonIncreasing,
            _ => Observed::Mixed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendLine {
    pub metric: Metric,
    pub expected: Direction,
    pub observed: Observed,
    pub pass: bool,
    /// First adjacent pair of parameter values breaking the expectation.
    pub offending: Option<(f64, f64)>,
}

impl TrendLine {
    /// `metric,expected,observed,PASS|FAIL` plus the offending pair when
    /// there is one.
    pub fn render(&self) -> String {
        let mut s = format!(
            "{},{},{},{}",
            self.metric.name(),
            self.expected.name(),
            self.observed.name(),
            if self.pass { "PASS" } else { "FAIL" }
        );
        if let Some((a, b)) = self.offending {
            s.push_str(&format!(",{a}->{b}"));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendReport {
    pub parameter: String,
    pub lines: Vec<TrendLine>,
}

impl TrendReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for l in &self.lines {
            s.push_str(&l.render());
            s.push('\n');
        }
        s
    }
}

/// Checks every metric column against its expected direction. Rows are
/// taken in parameter order; FAILED rows and absent values break the
/// chain and are reported as the offending pair.
pub fn check_trends(result: &SweepResult, expect: &TrendExpectation) -> TrendReport {
    let mut rows: Vec<&SweepRow> = result.rows.iter().collect();
    rows.sort_by(|a, b| a.value.total_cmp(&b.value));
    let lines = Metric::ALL
        .iter()
        .map(|&metric| {
            let expected = expect.direction(metric);
            let column: Vec<(f64, Option<f64>)> = rows
                .iter()
                .map(|r| (r.value, r.metrics.as_ref().and_then(|m| metric.of(m))))
                .collect();
            let present: Vec<f64> = column.iter().filter_map(|c| c.1).collect();
            let observed = if present.len() == column.len() {
                Observed::of(&present)
            } else if present.len() < 2 {
                Observed::Insufficient
            } else {
                Observed::Mixed
            };
            let mut offending = None;
            if expected != Direction::None {
                for w in column.windows(2) {
                    let ok = match (w[0].1, w[1].1) {
                        (Some(a), Some(b)) => expected.holds(a, b),
                        _ => false,
                    };
                    if !ok {
                        offending = Some((w[0].0, w[1].0));
                        break;
                    }
                }
            }
            let enough = !expected.is_strict() || column.len() >= 2;
            TrendLine {
                metric,
                expected,
                observed,
                pass: enough && offending.is_none(),
                offending,
            }
        })
        .collect();
    TrendReport {
        parameter: result.parameter.clone(),
        lines,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub weight: f64,
    pub sense: Sense,
}

/// Weights and senses for the three metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignObjectives {
    pub dy_max: Objective,
    pub dx_min: Objective,
    pub t: Objective,
}

impl DesignObjectives {
    /// Small offset, wide spacing, short sensing time, equally weighted.
    pub fn balanced() -> Self {
        let obj = |sense| Objective { weight: 1.0, sense };
        DesignObjectives {
            dy_max: obj(Sense::Minimize),
            dx_min: obj(Sense::Maximize),
            t: obj(Sense::Minimize),
        }
    }

    fn get(&self, m: Metric) -> Objective {
        match m {
            Metric::DyMax => self.dy_max,
            Metric::DxMin => self.dx_min,
            Metric::T => self.t,
        }
    }
}

/// Index of the row with the largest weighted sum of min-max normalized,
/// sense-adjusted metrics. An absent `dx_min` scores zero. Ties go to the
/// smaller T, then the smaller parameter value.
pub fn select_design(result: &SweepResult, objectives: &DesignObjectives) -> Result<usize> {
    let ws = Metric::ALL.map(|m| objectives.get(m).weight);
    if ws.iter().any(|w| !(*w >= 0.0)) || ws.iter().all(|w| *w == 0.0) {
        return Err(Error::invalid(
            "weights",
            "must be non-negative and not all zero",
        ));
    }
    let ok: Vec<(usize, &FocusingMetrics)> = result
        .rows
        .iter()
        .enumerate()
        .filter_map(|(k, r)| r.metrics.as_ref().filter(|_| r.is_ok()).map(|m| (k, m)))
        .collect();
    if ok.is_empty() {
        return Err(Error::AllRowsFailed);
    }
    let score = |m: &FocusingMetrics| -> f64 {
        Metric::ALL
            .iter()
            .map(|&metric| {
                let obj = objectives.get(metric);
                let Some(v) = metric.of(m) else { return 0.0 };
                let vals = ok.iter().filter_map(|(_, r)| metric.of(r));
                let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                    (lo.min(x), hi.max(x))
                });
                let n = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
                let adj = match obj.sense {
                    Sense::Maximize => n,
                    Sense::Minimize => 1.0 - n,
                };
                obj.weight * adj
            })
            .sum()
    };
    let mut best = ok[0];
    let mut best_score = score(best.1);
    for &cand in &ok[1..] {
        let s = score(cand.1);
        let tol = 1e-12 * (1.0 + best_score.abs());
        let better = if s > best_score + tol {
            true
        } else if s + tol >= best_score {
            let (a, b) = (cand.1.t_s, best.1.t_s);
            a < b || (a == b && result.rows[cand.0].value < result.rows[best.0].value)
        } else {
            false
        };
        if better {
            best = cand;
            best_score = s;
        }
    }
    Ok(best.0)
}

/// Parameter values as text, for diagnostics.
pub fn describe_values(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}
