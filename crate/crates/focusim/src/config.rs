//! JSON run configuration. Every physical quantity carries its unit in the
//! key name. Omitted keys take the defaults below; unknown keys are errors.
//!
//! Lines starting with `#` before the opening brace are ignored, so the
//! resolved-config echo written next to the outputs can be fed back in.
//! The echo lists every key; `null` marks a value derived from others at
//! each run (for example the side-channel width follows `main_width_um`
//! through a width sweep).

use std::path::Path;

use focusim_core::flow::{FlowBoundaryConditions, FluidProperties};
use focusim_core::geometry::{build_geometry, ChannelGeometry, GeometryParams};
use focusim_core::impedance::{
    default_frequencies, log_sweep, DielectricDomain, DielectricMaterial,
};
use focusim_core::sweep::{
    DesignObjectives, Direction, Objective, PipelineConfig, Resolution, Sense, SweepSpec,
    TracerSettings, TrendExpectation,
};
use focusim_core::tracer::{CellClass, CellSpecies, ParticleModel, Placement, ReleaseMode};
use focusim_core::Vec2;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub main_width_um: f64,
    pub main_length_um: f64,
    pub junction_um: f64,
    /// `null`: 500 um before the outlet.
    pub electrode_um: Option<f64>,
    pub sheath_angle_deg: f64,
    /// `null`: the main channel width.
    pub side_width_um: Option<f64>,
    /// `null`: three side-channel widths.
    pub side_length_um: Option<f64>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        let p = GeometryParams::final_design();
        GeometryConfig {
            main_width_um: p.main_width_um,
            main_length_um: p.main_length_um,
            junction_um: p.junction_um,
            electrode_um: p.electrode_um,
            sheath_angle_deg: p.sheath_angle_deg,
            side_width_um: p.side_width_um,
            side_length_um: p.side_length_um,
        }
    }
}

impl GeometryConfig {
    pub fn params(&self) -> GeometryParams {
        GeometryParams {
            main_width_um: self.main_width_um,
            main_length_um: self.main_length_um,
            junction_um: self.junction_um,
            electrode_um: self.electrode_um,
            sheath_angle_deg: self.sheath_angle_deg,
            side_width_um: self.side_width_um,
            side_length_um: self.side_length_um,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FluidConfig {
    pub density_kg_per_m3: f64,
    pub viscosity_pa_s: f64,
}

impl Default for FluidConfig {
    fn default() -> Self {
        let f = FluidProperties::default();
        FluidConfig {
            density_kg_per_m3: f.density_kg_per_m3,
            viscosity_pa_s: f.viscosity_pa_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub v1_um_per_s: f64,
    pub v2_um_per_s: f64,
    /// Fixed grid spacing; overrides `cells_across`.
    pub grid_spacing_um: Option<f64>,
    /// Grid cells across the main channel when no spacing is given.
    pub cells_across: u32,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            v1_um_per_s: 500.0,
            v2_um_per_s: 5000.0,
            grid_spacing_um: None,
            cells_across: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassName {
    #[serde(rename = "WBC")]
    Wbc,
    #[serde(rename = "CTC")]
    Ctc,
}

/// A species either spelled out in full or taken from a preset
/// (`lymphocyte`, `monocyte`, `neutrophil`, `mcf7`, `mda-mb-231`) with
/// optional overrides.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpeciesConfig {
    pub preset: Option<String>,
    pub name: Option<String>,
    pub class: Option<ClassName>,
    pub density_g_per_ml: Option<[f64; 2]>,
    pub diameter_um: Option<f64>,
    pub diameter_std_um: Option<f64>,
    pub fraction: Option<f64>,
    pub conductivity_s_per_m: Option<f64>,
    pub permittivity_rel: Option<f64>,
}

pub fn preset(name: &str) -> Option<CellSpecies> {
    Some(match name {
        "lymphocyte" => CellSpecies::lymphocyte(),
        "monocyte" => CellSpecies::monocyte(),
        "neutrophil" => CellSpecies::neutrophil(),
        "mcf7" => CellSpecies::mcf7(),
        "mda-mb-231" => CellSpecies::mda_mb_231(),
        _ => return None,
    })
}

impl SpeciesConfig {
    fn from_species(s: &CellSpecies) -> Self {
        SpeciesConfig {
            preset: None,
            name: Some(s.name.clone()),
            class: Some(match s.class {
                CellClass::Wbc => ClassName::Wbc,
                CellClass::Ctc => ClassName::Ctc,
            }),
            density_g_per_ml: Some([s.density_g_per_ml.0, s.density_g_per_ml.1]),
            diameter_um: Some(s.mean_diameter_um),
            diameter_std_um: Some(s.diameter_std_um),
            fraction: Some(s.fraction),
            conductivity_s_per_m: Some(s.conductivity_s_per_m),
            permittivity_rel: Some(s.permittivity_rel),
        }
    }

    pub fn species(&self, index: usize) -> Result<CellSpecies, CliError> {
        let field = |what: &str| format!("species[{index}].{what}");
        let base = match &self.preset {
            Some(p) => Some(preset(p).ok_or_else(|| {
                CliError::Validation(format!("{}: unknown preset \"{p}\"", field("preset")))
            })?),
            None => None,
        };
        let need = |v: Option<f64>, from: Option<f64>, what: &str| {
            v.or(from).ok_or_else(|| {
                CliError::Validation(format!("{}: required without a preset", field(what)))
            })
        };
        let b = base.as_ref();
        let name = self
            .name
            .clone()
            .or_else(|| b.map(|s| s.name.clone()))
            .ok_or_else(|| CliError::Validation(format!("{}: required", field("name"))))?;
        if name.is_empty() || name.contains([',', '"', '\n', '/', '\\']) {
            return Err(CliError::Validation(format!(
                "{}: must be non-empty without commas, quotes or slashes",
                field("name")
            )));
        }
        let class = match (self.class, b) {
            (Some(ClassName::Wbc), _) => CellClass::Wbc,
            (Some(ClassName::Ctc), _) => CellClass::Ctc,
            (None, Some(s)) => s.class,
            (None, None) => {
                return Err(CliError::Validation(format!(
                    "{}: required",
                    field("class")
                )))
            }
        };
        let density = match (self.density_g_per_ml, b) {
            (Some([lo, hi]), _) => (lo, hi),
            (None, Some(s)) => s.density_g_per_ml,
            (None, None) => {
                return Err(CliError::Validation(format!(
                    "{}: required",
                    field("density_g_per_ml")
                )))
            }
        };
        let s = CellSpecies {
            name,
            class,
            density_g_per_ml: density,
            mean_diameter_um: need(
                self.diameter_um,
                b.map(|s| s.mean_diameter_um),
                "diameter_um",
            )?,
            diameter_std_um: self
                .diameter_std_um
                .or(b.map(|s| s.diameter_std_um))
                .unwrap_or(0.0),
            fraction: need(self.fraction, b.map(|s| s.fraction), "fraction")?,
            conductivity_s_per_m: need(
                self.conductivity_s_per_m,
                b.map(|s| s.conductivity_s_per_m),
                "conductivity_s_per_m",
            )?,
            permittivity_rel: need(
                self.permittivity_rel,
                b.map(|s| s.permittivity_rel),
                "permittivity_rel",
            )?,
        };
        s.validate()
            .map_err(|e| CliError::Validation(format!("species[{index}]: {e}")))?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelName {
    Tracer,
    Inertial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReleaseName {
    Batch,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlacementName {
    Random,
    Even,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TracerConfig {
    pub particles: usize,
    pub seed: u64,
    pub dt_s: f64,
    /// `null`: ten plug-flow transit times of the channel.
    pub t_max_s: Option<f64>,
    pub model: ModelName,
    /// Saffman lift in the inertial model.
    pub lift: bool,
    pub release: ReleaseName,
    pub mean_interval_s: Option<f64>,
    pub placement: PlacementName,
}

impl Default for TracerConfig {
    fn default() -> Self {
        let t = TracerSettings::default();
        TracerConfig {
            particles: t.particles,
            seed: t.seed,
            dt_s: t.dt_s,
            t_max_s: None,
            model: ModelName::Tracer,
            lift: true,
            release: ReleaseName::Batch,
            mean_interval_s: None,
            placement: PlacementName::Random,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialConfig {
    pub conductivity_s_per_m: f64,
    pub permittivity_rel: f64,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        let m = DielectricMaterial::medium();
        MaterialConfig {
            conductivity_s_per_m: m.conductivity_s_per_m,
            permittivity_rel: m.permittivity_rel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImpedanceConfig {
    pub length_um: f64,
    pub gap_um: f64,
    pub electrode_width_um: f64,
    pub drive_voltage_v: f64,
    pub depth_um: f64,
    pub medium: MaterialConfig,
    /// `null`: the largest spacing up to 1 um that resolves the electrodes,
    /// the gap and every simulated cell.
    pub grid_spacing_um: Option<f64>,
    /// Spectrum frequencies; DC plus 50 log points over 10 kHz to 10 MHz
    /// when omitted.
    pub frequencies_hz: Option<Vec<f64>>,
    /// Cell center; midway between the electrodes when omitted.
    pub cell_position_um: Option<[f64; 2]>,
    /// Band averaged by the classifier.
    pub band_hz: [f64; 2],
    /// Log-spaced frequencies across the band used by `classify`.
    pub band_points: usize,
    /// Size of the mixed population classified by `classify`.
    pub samples: usize,
    /// Fixed decision threshold; calibrated from one mean-sized cell per
    /// species when omitted.
    pub threshold: Option<f64>,
}

impl Default for ImpedanceConfig {
    fn default() -> Self {
        let d = DielectricDomain::default();
        ImpedanceConfig {
            length_um: d.length_um,
            gap_um: d.gap_um,
            electrode_width_um: d.electrode_width_um,
            drive_voltage_v: d.drive_voltage_v,
            depth_um: d.depth_um,
            medium: MaterialConfig::default(),
            grid_spacing_um: None,
            frequencies_hz: None,
            cell_position_um: None,
            band_hz: [1e5, 1e7],
            band_points: 11,
            samples: 40,
            threshold: None,
        }
    }
}

impl ImpedanceConfig {
    pub fn domain(&self) -> DielectricDomain {
        DielectricDomain {
            length_um: self.length_um,
            gap_um: self.gap_um,
            electrode_width_um: self.electrode_width_um,
            drive_voltage_v: self.drive_voltage_v,
            depth_um: self.depth_um,
            medium: DielectricMaterial {
                conductivity_s_per_m: self.medium.conductivity_s_per_m,
                permittivity_rel: self.medium.permittivity_rel,
            },
            inclusion: None,
        }
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.frequencies_hz
            .clone()
            .unwrap_or_else(default_frequencies)
    }

    pub fn band_frequencies(&self) -> Vec<f64> {
        log_sweep(self.band_hz[0], self.band_hz[1], self.band_points, false)
    }

    /// Grid spacing for solves with cells of the given diameters. A
    /// configured spacing coarser than the solver's limit is rejected.
    pub fn spacing_for(&self, diameters_um: &[f64]) -> Result<f64, CliError> {
        let d = diameters_um.iter().copied().fold(f64::INFINITY, f64::min);
        let limit = (self.gap_um / 4.0).min(self.electrode_width_um.min(d) / 6.0);
        match self.grid_spacing_um {
            None => Ok(limit.min(1.0)),
            Some(h) if !(h > 0.0) => Err(CliError::Validation(
                "impedance.grid_spacing_um: must be > 0".into(),
            )),
            Some(h) if h > limit * (1.0 + 1e-12) => Err(CliError::Validation(format!(
                "impedance.grid_spacing_um: {h} um too coarse for a {d} um cell (must be <= {limit} um)"
            ))),
            Some(h) => Ok(h),
        }
    }

    pub fn cell_position(&self) -> Vec2 {
        match self.cell_position_um {
            Some([x, y]) => Vec2::new(x, y),
            None => self.domain().center(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpectConfig {
    pub dy_max: String,
    pub dx_min: String,
    #[serde(rename = "T")]
    pub t: String,
}

impl Default for ExpectConfig {
    fn default() -> Self {
        ExpectConfig {
            dy_max: "NONE".into(),
            dx_min: "NONE".into(),
            t: "NONE".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightsConfig {
    pub dy_max: f64,
    pub dx_min: f64,
    #[serde(rename = "T")]
    pub t: f64,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        WeightsConfig {
            dy_max: 1.0,
            dx_min: 1.0,
            t: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// `X1`, `V1`, `V2`, `Y` or any other sweepable scalar key.
    pub parameter: String,
    pub values: Vec<f64>,
    #[serde(default)]
    pub particles: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub replicates: usize,
    /// Trend directions; the axis defaults apply when omitted.
    #[serde(default)]
    pub expect: Option<ExpectConfig>,
    #[serde(default)]
    pub weights: WeightsConfig,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub fluid: FluidConfig,
    pub flow: FlowConfig,
    pub species: Vec<SpeciesConfig>,
    pub tracer: TracerConfig,
    pub impedance: ImpedanceConfig,
    pub sweep: Option<SweepConfig>,
    pub output_dir: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            geometry: GeometryConfig::default(),
            fluid: FluidConfig::default(),
            flow: FlowConfig::default(),
            species: focusim_core::tracer::default_population()
                .iter()
                .map(SpeciesConfig::from_species)
                .collect(),
            tracer: TracerConfig::default(),
            impedance: ImpedanceConfig::default(),
            sweep: None,
            output_dir: None,
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub resolution_um: Option<f64>,
}

/// Parses configuration text. Leading `#` lines are blanked so reported
/// line numbers still match the file.
pub fn parse_config_str(text: &str) -> Result<RunConfig, CliError> {
    let mut body = String::with_capacity(text.len());
    let mut header = true;
    for line in text.split_inclusive('\n') {
        if header && line.trim_start().starts_with('#') {
            body.push('\n');
        } else {
            header = header && line.trim().is_empty();
            body.push_str(line);
        }
    }
    serde_json::from_str(&body).map_err(CliError::from_json)
}

pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_config_str(&text)
}

/// Configuration with overrides applied, validated and with every
/// derived default materialized.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub geometry: ChannelGeometry,
    pub species: Vec<CellSpecies>,
    pub pipeline: PipelineConfig,
}

fn invalid(e: focusim_core::Error) -> CliError {
    CliError::Validation(e.to_string())
}

impl RunConfig {
    pub fn resolve(mut self, ov: Overrides) -> Result<Resolved, CliError> {
        if let Some(seed) = ov.seed {
            self.tracer.seed = seed;
            if let Some(s) = self.sweep.as_mut() {
                s.seed = Some(seed);
            }
        }
        if let Some(h) = ov.resolution_um {
            self.flow.grid_spacing_um = Some(h);
            self.impedance.grid_spacing_um = Some(h);
        }
        let geometry = build_geometry(&self.geometry.params()).map_err(invalid)?;

        if self.species.is_empty() {
            return Err(CliError::Validation("species: list is empty".into()));
        }
        let species = self
            .species
            .iter()
            .enumerate()
            .map(|(k, s)| s.species(k))
            .collect::<Result<Vec<_>, _>>()?;
        for (k, s) in species.iter().enumerate() {
            if species[..k].iter().any(|o| o.name == s.name) {
                return Err(CliError::Validation(format!(
                    "species[{k}].name: duplicate \"{}\"",
                    s.name
                )));
            }
        }
        if species.iter().map(|s| s.fraction).sum::<f64>() <= 0.0 {
            return Err(CliError::Validation(
                "species: fractions sum to zero".into(),
            ));
        }
        self.species = species.iter().map(SpeciesConfig::from_species).collect();

        let t = &self.tracer;
        let release = match t.release {
            ReleaseName::Batch => ReleaseMode::Batch,
            ReleaseName::Poisson => ReleaseMode::Poisson {
                mean_interval_s: t.mean_interval_s.ok_or_else(|| {
                    CliError::Validation(
                        "tracer.mean_interval_s: required for poisson release".into(),
                    )
                })?,
            },
        };
        let pipeline = PipelineConfig {
            geometry: self.geometry.params(),
            fluid: FluidProperties {
                density_kg_per_m3: self.fluid.density_kg_per_m3,
                viscosity_pa_s: self.fluid.viscosity_pa_s,
            },
            flow: FlowBoundaryConditions {
                v1_um_per_s: self.flow.v1_um_per_s,
                v2_um_per_s: self.flow.v2_um_per_s,
            },
            species: species.clone(),
            tracer: TracerSettings {
                particles: t.particles,
                seed: t.seed,
                dt_s: t.dt_s,
                t_max_s: t.t_max_s,
                model: match t.model {
                    ModelName::Tracer => ParticleModel::Tracer,
                    ModelName::Inertial => ParticleModel::Inertial { lift: t.lift },
                },
                release,
                placement: match t.placement {
                    PlacementName::Random => Placement::Random,
                    PlacementName::Even => Placement::Even,
                },
            },
            resolution: match self.flow.grid_spacing_um {
                Some(h) => Resolution::Spacing(h),
                None => Resolution::CellsAcross(self.flow.cells_across),
            },
        };
        pipeline.validate().map_err(invalid)?;

        let imp = &self.impedance;
        let dom = imp.domain();
        dom.validate().map_err(invalid)?;
        let freqs = imp.frequencies();
        if freqs.iter().any(|f| !(*f >= 0.0) || !f.is_finite())
            || freqs.windows(2).any(|w| !(w[0] < w[1]))
        {
            return Err(CliError::Validation(
                "impedance.frequencies_hz: must be >= 0 and strictly increasing".into(),
            ));
        }
        let [lo, hi] = imp.band_hz;
        if !(lo > 0.0 && lo <= hi) || imp.band_points == 0 {
            return Err(CliError::Validation(
                "impedance.band_hz: need 0 < lo <= hi and band_points >= 1".into(),
            ));
        }
        if imp.samples == 0 {
            return Err(CliError::Validation(
                "impedance.samples: must be > 0".into(),
            ));
        }
        let c = imp.cell_position();
        for s in &species {
            for d in [s.mean_diameter_um, s.max_diameter_um()] {
                dom.with_inclusion(c, d, s.dielectric())
                    .validate()
                    .map_err(|e| CliError::Validation(format!("impedance ({}): {e}", s.name)))?;
            }
        }
        let means: Vec<f64> = species.iter().map(|s| s.mean_diameter_um).collect();
        imp.spacing_for(&means)?;
        self.impedance.frequencies_hz = Some(freqs);
        self.impedance.cell_position_um = Some([c.x, c.y]);

        if let Some(sw) = &mut self.sweep {
            sw.particles.get_or_insert(t.particles);
            sw.seed.get_or_insert(t.seed);
            if sw.expect.is_none() {
                if let Some(e) = TrendExpectation::for_axis(&sw.parameter) {
                    sw.expect = Some(ExpectConfig {
                        dy_max: e
                            .direction(focusim_core::sweep::Metric::DyMax)
                            .name()
                            .into(),
                        dx_min: e
                            .direction(focusim_core::sweep::Metric::DxMin)
                            .name()
                            .into(),
                        t: e.direction(focusim_core::sweep::Metric::T).name().into(),
                    });
                }
            }
        }
        let resolved = Resolved {
            config: self,
            geometry,
            species,
            pipeline,
        };
        if let Some(spec) = resolved.sweep_spec()? {
            spec.validate().map_err(invalid)?;
            resolved.trend_expectation()?;
            resolved.objectives()?;
        }
        Ok(resolved)
    }
}

impl Resolved {
    pub fn seed(&self) -> u64 {
        self.config.tracer.seed
    }

    pub fn sweep_spec(&self) -> Result<Option<SweepSpec>, CliError> {
        let Some(sw) = &self.config.sweep else {
            return Ok(None);
        };
        Ok(Some(SweepSpec {
            base: self.pipeline.clone(),
            parameter: sw.parameter.clone(),
            values: sw.values.clone(),
            particles: sw.particles.unwrap_or(self.pipeline.tracer.particles),
            seed: sw.seed.unwrap_or(self.pipeline.tracer.seed),
            replicates: sw.replicates,
        }))
    }

    /// Directions to check a sweep against, if any are configured.
    pub fn trend_expectation(&self) -> Result<Option<TrendExpectation>, CliError> {
        let Some(e) = self.config.sweep.as_ref().and_then(|s| s.expect.as_ref()) else {
            return Ok(None);
        };
        let dir = |s: &str, key: &str| {
            Direction::parse(s).ok_or_else(|| {
                CliError::Validation(format!(
                    "sweep.expect.{key}: \"{s}\" is not one of INCREASING, DECREASING, NON_INCREASING, NON_DECREASING, NONE"
                ))
            })
        };
        let (a, b, c) = (
            dir(&e.dy_max, "dy_max")?,
            dir(&e.dx_min, "dx_min")?,
            dir(&e.t, "T")?,
        );
        TrendExpectation::new(a, b, c).map(Some).map_err(invalid)
    }

    pub fn objectives(&self) -> Result<DesignObjectives, CliError> {
        let w = self
            .config
            .sweep
            .as_ref()
            .map(|s| s.weights.clone())
            .unwrap_or_default();
        if [w.dy_max, w.dx_min, w.t].iter().any(|v| !(*v >= 0.0))
            || [w.dy_max, w.dx_min, w.t].iter().all(|v| *v == 0.0)
        {
            return Err(CliError::Validation(
                "sweep.weights: must be non-negative and not all zero".into(),
            ));
        }
        let obj = |weight, sense| Objective { weight, sense };
        Ok(DesignObjectives {
            dy_max: obj(w.dy_max, Sense::Minimize),
            dx_min: obj(w.dx_min, Sense::Maximize),
            t: obj(w.t, Sense::Minimize),
        })
    }

    /// Canonical JSON of the resolved configuration.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.config).expect("configuration serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_takes_defaults() {
        let c = parse_config_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        let r = c.resolve(Overrides::default()).unwrap();
        assert_eq!(r.geometry.electrode_um(), 9500.0);
        assert_eq!(r.species.len(), 4);
    }

    #[test]
    fn misspelled_key_is_named() {
        let e = parse_config_str("{\"geometry\": {\"chanel_width\": 50}}").unwrap_err();
        assert_eq!(e, CliError::UnknownKey("chanel_width".into()));
    }

    #[test]
    fn syntax_error_has_position() {
        let e = parse_config_str("# comment\n{\n  \"flow\": {,}\n}").unwrap_err();
        match e {
            CliError::Syntax { line, .. } => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn preset_with_override() {
        let c = parse_config_str(
            r#"{"species": [{"preset": "mcf7", "fraction": 0.5}, {"preset": "neutrophil"}]}"#,
        )
        .unwrap();
        let r = c.resolve(Overrides::default()).unwrap();
        assert_eq!(r.species[0].fraction, 0.5);
        assert_eq!(r.species[0].mean_diameter_um, 18.0);
        assert_eq!(r.species[1].name, "neutrophil");
    }

    #[test]
    fn invalid_geometry_is_validation_error() {
        let c = parse_config_str(r#"{"geometry": {"junction_um": 12000}}"#).unwrap();
        assert!(matches!(
            c.resolve(Overrides::default()),
            Err(CliError::Validation(_))
        ));
    }

    #[test]
    fn resolved_echo_round_trips() {
        let c =
            parse_config_str(r#"{"sweep": {"parameter": "V2", "values": [1000, 2000]}}"#).unwrap();
        let r = c
            .resolve(Overrides {
                seed: Some(9),
                resolution_um: None,
            })
            .unwrap();
        let text = format!("# header\n{}", r.to_json());
        let again = parse_config_str(&text).unwrap();
        assert_eq!(again, r.config);
        assert_eq!(again.sweep.unwrap().seed, Some(9));
    }
}
