//! The six subcommands. Each builds its files in memory; nothing reaches
//! disk unless the whole command succeeds.

use focusim_core::flow::FlowField;
use focusim_core::impedance::{
    calibrate_threshold, classify, impedance_of, normalized, spectrum, ClassificationResult,
    DielectricDomain, ImpedanceSpectrum, Label, NormalizedImpedance, Sample,
};
use focusim_core::metrics::FocusingMetrics;
use focusim_core::sweep::{
    check_trends, run_pipeline, run_sweep, select_design, solve_pipeline_flow, PipelineOutput,
    RowStatus, SweepResult,
};
use focusim_core::tracer::{
    sample_population, CellClass, CellSpecies, Placement, ReleaseMode, ReleaseRegion,
};
use focusim_core::{Executor, Vec2};
use num_complex::Complex64;

use crate::config::{preset, Resolved};
use crate::error::CliError;
use crate::exec::RayonExecutor;
use crate::fixtures::check_fixtures;
use crate::output::{config_hash, Cell, Outputs, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Flow,
    Trace,
    Sweep,
    Impedance,
    Classify,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Flow => "flow",
            Command::Trace => "trace",
            Command::Sweep => "sweep",
            Command::Impedance => "impedance",
            Command::Classify => "classify",
            Command::Report => "report",
        }
    }
}

pub const RESOLVED_CONFIG: &str = "resolved_config.json";

/// Runs `cmd` and returns the files it produced, including the
/// resolved-configuration echo.
pub fn run(cmd: Command, cfg: &Resolved, exec: &RayonExecutor) -> Result<Outputs, CliError> {
    let json = cfg.to_json();
    let mut out = Outputs::new(&config_hash(&json), cfg.seed());
    out.add_text(RESOLVED_CONFIG, &json);
    match cmd {
        Command::Flow => flow(cfg, &mut out)?,
        Command::Trace => trace(cfg, exec, &mut out)?,
        Command::Sweep => sweep(cfg, exec, &mut out, true)?,
        Command::Impedance => impedance(cfg, exec, &mut out)?,
        Command::Classify => classification(cfg, exec, &mut out)?,
        Command::Report => report(cfg, exec, &mut out)?,
    }
    Ok(out)
}

pub fn flow_table(flow: &FlowField) -> Table {
    let grid = flow.grid();
    let mut t = Table::new(&["x_um", "y_um", "u_um_per_s", "v_um_per_s", "p_pa"]);
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            if !grid.kind(i, j).is_fluid() {
                continue;
            }
            let c = grid.cell_center(i, j);
            let u = flow.cell_velocity(i, j);
            t.row(&[
                Cell::Num(c.x),
                Cell::Num(c.y),
                Cell::Num(u.x),
                Cell::Num(u.y),
                Cell::Num(flow.pressure(i, j)),
            ]);
        }
    }
    t
}

fn flow(cfg: &Resolved, out: &mut Outputs) -> Result<(), CliError> {
    let (_, field) = solve_pipeline_flow(&cfg.pipeline)?;
    out.add_table("flow_field.csv", flow_table(&field))
}

/// Positions of every particle, thinned to one sample per `every_s` of
/// clock time plus the final sample.
pub fn trajectories_table(run: &PipelineOutput, species: &[CellSpecies], every_s: f64) -> Table {
    let mut t = Table::new(&["particle_id", "species", "t_s", "x_um", "y_um"]);
    for tr in &run.trajectories {
        let name = species[tr.species].name.as_str();
        let last = tr.samples.len() - 1;
        let mut next = f64::NEG_INFINITY;
        for (k, s) in tr.samples.iter().enumerate() {
            if s.t_s < next && k != last {
                continue;
            }
            next = s.t_s + every_s;
            t.row(&[
                Cell::Int(tr.particle_id as u64),
                Cell::Text(name),
                Cell::Num(s.t_s),
                Cell::Num(s.x_um),
                Cell::Num(s.y_um),
            ]);
        }
    }
    t
}

pub fn crossings_table(run: &PipelineOutput, species: &[CellSpecies]) -> Table {
    let mut t = Table::new(&[
        "particle_id",
        "species",
        "d_um",
        "t_cross_s",
        "y_at_cross_um",
    ]);
    for tr in &run.trajectories {
        if let Some(c) = tr.crossing {
            t.row(&[
                Cell::Int(tr.particle_id as u64),
                Cell::Text(&species[tr.species].name),
                Cell::Num(tr.diameter_um),
                Cell::Num(c.t_s),
                Cell::Num(c.y_um),
            ]);
        }
    }
    t
}

pub fn metrics_table(run_id: &str, m: &FocusingMetrics) -> Table {
    let mut t = Table::new(&["run_id", "dy_max_um", "dx_min_um", "T_s"]);
    t.row(&[
        Cell::Text(run_id),
        Cell::Num(m.dy_max_um),
        m.dx_min_um.map_or(Cell::Empty, Cell::Num),
        Cell::Num(m.t_s),
    ]);
    t
}

fn trace(cfg: &Resolved, exec: &RayonExecutor, out: &mut Outputs) -> Result<(), CliError> {
    let run = run_pipeline(&cfg.pipeline, exec)?;
    out.add_table(
        "trajectories.csv",
        trajectories_table(&run, &cfg.species, cfg.pipeline.tracer.dt_s),
    )?;
    out.add_table("crossings.csv", crossings_table(&run, &cfg.species))?;
    out.add_table(
        "metrics.csv",
        metrics_table(&format!("seed{}", cfg.pipeline.tracer.seed), &run.metrics),
    )
}

pub fn sweep_table(result: &SweepResult) -> Table {
    let mut t = Table::new(&[
        "param_name",
        "param_value",
        "dy_max_um",
        "dx_min_um",
        "T_s",
        "status",
    ]);
    for r in &result.rows {
        let m = r.metrics.filter(|_| r.is_ok());
        let num = |v: Option<f64>| v.map_or(Cell::Empty, Cell::Num);
        t.row(&[
            Cell::Text(&result.parameter),
            Cell::Num(r.value),
            num(m.map(|m| m.dy_max_um)),
            num(m.and_then(|m| m.dx_min_um)),
            num(m.map(|m| m.t_s)),
            Cell::Text(match r.status {
                RowStatus::Ok => "OK",
                RowStatus::Failed(_) => "FAILED",
            }),
        ]);
    }
    t
}

/// Runs the configured sweep. With `required`, a missing sweep block is a
/// validation error; otherwise it is skipped.
fn sweep(
    cfg: &Resolved,
    exec: &RayonExecutor,
    out: &mut Outputs,
    required: bool,
) -> Result<(), CliError> {
    let Some(spec) = cfg.sweep_spec()? else {
        if required {
            return Err(CliError::Validation("sweep: block is required".into()));
        }
        return Ok(());
    };
    let result = run_sweep(&spec, exec)?;
    out.add_table("sweep.csv", sweep_table(&result))?;

    let mut text = String::new();
    for r in &result.rows {
        if let RowStatus::Failed(e) = &r.status {
            text.push_str(&format!("# {}={} FAILED: {e}\n", result.parameter, r.value));
        }
    }
    if let Some(expect) = cfg.trend_expectation()? {
        text.push_str(&check_trends(&result, &expect).render());
    }
    let best = select_design(&result, &cfg.objectives()?)?;
    text.push_str(&format!(
        "selected,{},{}\n",
        result.parameter, result.rows[best].value
    ));
    out.add_text("trend_report.txt", &text);
    Ok(())
}

/// |Z| spectra for each species (cell at the configured position with its
/// mean diameter) and for the empty channel.
pub struct SpeciesSpectra {
    pub empty: ImpedanceSpectrum,
    pub cells: Vec<(String, ImpedanceSpectrum, NormalizedImpedance)>,
}

pub fn species_spectra(
    cfg: &Resolved,
    species: &[CellSpecies],
    exec: &RayonExecutor,
) -> Result<SpeciesSpectra, CliError> {
    let imp = &cfg.config.impedance;
    let dom = imp.domain();
    let freqs = imp.frequencies();
    let means: Vec<f64> = species.iter().map(|s| s.mean_diameter_um).collect();
    let h = imp.spacing_for(&means)?;
    let pos = imp.cell_position();
    let empty = spectrum(&dom, &freqs, h, exec)?;
    let cells = species
        .iter()
        .map(|s| {
            let z = spectrum(
                &dom.with_inclusion(pos, s.mean_diameter_um, s.dielectric()),
                &freqs,
                h,
                exec,
            )?;
            let n = normalized(&z, &empty)?;
            Ok((s.name.clone(), z, n))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(SpeciesSpectra { empty, cells })
}

pub fn spectrum_table(z: &ImpedanceSpectrum, n: &NormalizedImpedance) -> Table {
    let mut t = Table::new(&[
        "freq_hz",
        "re_z_ohm",
        "im_z_ohm",
        "abs_z_ohm",
        "n_signed",
        "n_abs",
    ]);
    for k in 0..z.len() {
        let zk = z.z_ohm[k];
        t.row(&[
            Cell::Num(z.frequencies_hz[k]),
            Cell::Num(zk.re),
            Cell::Num(zk.im),
            Cell::Num(zk.norm()),
            Cell::Num(n.signed[k]),
            Cell::Num(n.magnitude[k]),
        ]);
    }
    t
}

fn add_spectra(out: &mut Outputs, prefix: &str, spectra: &SpeciesSpectra) -> Result<(), CliError> {
    for (name, z, n) in &spectra.cells {
        out.add_table(&format!("{prefix}{name}.csv"), spectrum_table(z, n))?;
    }
    Ok(())
}

fn impedance(cfg: &Resolved, exec: &RayonExecutor, out: &mut Outputs) -> Result<(), CliError> {
    let spectra = species_spectra(cfg, &cfg.species, exec)?;
    add_spectra(out, "spectrum_", &spectra)
}

/// Outcome of the `classify` command.
pub struct Classification {
    pub threshold: f64,
    pub results: Vec<ClassificationResult>,
    /// Sampled diameter and true class per result.
    pub truth: Vec<(f64, CellClass)>,
}

impl Classification {
    pub fn correct(&self) -> usize {
        self.results
            .iter()
            .zip(&self.truth)
            .filter(|(r, (_, c))| r.label == Label::from(*c))
            .count()
    }

    fn extreme(&self, class: CellClass, max: bool) -> Option<f64> {
        let vals = self
            .results
            .iter()
            .zip(&self.truth)
            .filter(|(_, (_, c))| *c == class)
            .map(|(r, _)| r.statistic);
        if max {
            vals.reduce(f64::max)
        } else {
            vals.reduce(f64::min)
        }
    }

    /// Smallest CTC statistic over the largest WBC statistic.
    pub fn separation_ratio(&self) -> Option<f64> {
        Some(self.extreme(CellClass::Ctc, false)? / self.extreme(CellClass::Wbc, true)?)
    }
}

/// Normalized response of each (diameter, species) disk over `freqs`.
/// Identical cells are solved once.
fn band_responses(
    dom: &DielectricDomain,
    pos: Vec2,
    cells: &[(f64, &CellSpecies)],
    freqs: &[f64],
    h: f64,
    exec: &RayonExecutor,
) -> Result<Vec<NormalizedImpedance>, CliError> {
    let nf = freqs.len();
    let mut unique: Vec<(f64, &CellSpecies)> = Vec::new();
    let slot: Vec<usize> = cells
        .iter()
        .map(|&(d, s)| {
            unique
                .iter()
                .position(|&(e, t)| e == d && t == s)
                .unwrap_or_else(|| {
                    unique.push((d, s));
                    unique.len() - 1
                })
        })
        .collect();
    let empty = spectrum(dom, freqs, h, exec)?;
    let z: Vec<Complex64> = exec
        .map_indexed(unique.len() * nf, |k| {
            let (d, s) = unique[k / nf];
            impedance_of(
                &dom.with_inclusion(pos, d, s.dielectric()),
                freqs[k % nf],
                h,
            )
        })
        .into_iter()
        .collect::<Result<_, _>>()?;
    let responses = z
        .chunks(nf)
        .map(|zs| {
            let spec = ImpedanceSpectrum {
                frequencies_hz: freqs.to_vec(),
                z_ohm: zs.to_vec(),
            };
            normalized(&spec, &empty).map_err(CliError::from)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(slot.iter().map(|&k| responses[k].clone()).collect())
}

pub fn run_classification(
    cfg: &Resolved,
    exec: &RayonExecutor,
) -> Result<Classification, CliError> {
    let imp = &cfg.config.impedance;
    let dom = imp.domain();
    let pos = imp.cell_position();
    let freqs = imp.band_frequencies();
    let band = (imp.band_hz[0], imp.band_hz[1]);

    let region = ReleaseRegion {
        x_um: 0.0,
        y_lo_um: 0.0,
        y_hi_um: 0.0,
        mode: ReleaseMode::Batch,
        placement: Placement::Random,
    };
    let particles = sample_population(&cfg.species, imp.samples, cfg.seed(), &region)?;
    let cells: Vec<(f64, &CellSpecies)> = particles
        .iter()
        .map(|p| (p.diameter_um, &cfg.species[p.species]))
        .collect();
    for (d, s) in &cells {
        dom.with_inclusion(pos, *d, s.dielectric())
            .validate()
            .map_err(|e| CliError::Validation(format!("impedance ({}): {e}", s.name)))?;
    }
    let cal: Vec<(f64, &CellSpecies)> = cfg
        .species
        .iter()
        .map(|s| (s.mean_diameter_um, s))
        .collect();
    let diameters: Vec<f64> = cells.iter().chain(&cal).map(|(d, _)| *d).collect();
    let h = imp.spacing_for(&diameters)?;

    let threshold = match imp.threshold {
        Some(t) => t,
        None => {
            let resp = band_responses(&dom, pos, &cal, &freqs, h, exec)?;
            let stats = cal
                .iter()
                .zip(&resp)
                .map(|((_, s), r)| Ok((s.class, r.band_mean(band.0, band.1)?)))
                .collect::<Result<Vec<_>, CliError>>()?;
            calibrate_threshold(&stats)?
        }
    };
    let resp = band_responses(&dom, pos, &cells, &freqs, h, exec)?;
    let samples: Vec<Sample> = particles
        .iter()
        .zip(resp)
        .map(|(p, response)| Sample {
            id: format!("s{:03}", p.id),
            species: cfg.species[p.species].name.clone(),
            class: None,
            response,
        })
        .collect();
    let results = classify(&samples, band, Some(threshold))?;
    Ok(Classification {
        threshold,
        results,
        truth: cells.iter().map(|(d, s)| (*d, s.class)).collect(),
    })
}

fn classification(cfg: &Resolved, exec: &RayonExecutor, out: &mut Outputs) -> Result<(), CliError> {
    let c = run_classification(cfg, exec)?;
    let mut t = Table::new(&["sample_id", "species", "band_mean_n", "threshold", "label"]);
    for r in &c.results {
        t.row(&[
            Cell::Text(&r.sample_id),
            Cell::Text(&r.species),
            Cell::Num(r.statistic),
            Cell::Num(r.threshold),
            Cell::Text(r.label.name()),
        ]);
    }
    out.add_table("classification.csv", t)?;
    let mut s = format!(
        "samples,{}\ncorrect,{}\nthreshold,{}\n",
        c.results.len(),
        c.correct(),
        c.threshold
    );
    match c.separation_ratio() {
        Some(r) => s.push_str(&format!(
            "min_ctc_over_max_wbc,{r}\nreference_claim,>3\nmeets_reference,{}\n",
            r > 3.0
        )),
        None => s.push_str("min_ctc_over_max_wbc,\n"),
    }
    out.add_text("classification_summary.txt", &s);
    Ok(())
}

/// The configured species called `name`, or its preset.
fn configured_or_preset(cfg: &Resolved, name: &str) -> CellSpecies {
    cfg.species
        .iter()
        .find(|s| s.name == name)
        .cloned()
        .unwrap_or_else(|| preset(name).expect("known preset"))
}

fn report(cfg: &Resolved, exec: &RayonExecutor, out: &mut Outputs) -> Result<(), CliError> {
    let mut text = String::new();
    for (name, rep) in check_fixtures()? {
        for line in rep.render().lines() {
            text.push_str(&format!("{name},{line}\n"));
        }
    }
    out.add_text("fixture_trends.txt", &text);
    sweep(cfg, exec, out, false)?;

    let run = run_pipeline(&cfg.pipeline, exec)?;
    out.add_table(
        "fig3_trajectories.csv",
        trajectories_table(&run, &cfg.species, cfg.pipeline.tracer.dt_s),
    )?;

    let wbc: Vec<CellSpecies> = cfg
        .species
        .iter()
        .filter(|s| s.class == CellClass::Wbc)
        .cloned()
        .collect();
    let mut all = wbc.clone();
    all.push(configured_or_preset(cfg, "mcf7"));
    all.push(configured_or_preset(cfg, "mda-mb-231"));
    let spectra = species_spectra(cfg, &all, exec)?;
    let n_wbc = wbc.len();
    let [lo, hi] = cfg.config.impedance.band_hz;
    let mut summary = String::from("species,band_mean_n\n");
    let mut means = Vec::with_capacity(spectra.cells.len());
    for (name, _, n) in &spectra.cells {
        let m = n.band_mean(lo, hi)?;
        summary.push_str(&format!("{name},{m}\n"));
        means.push(m);
    }
    summary.push_str(&format!(
        "mcf7_above_mda-mb-231,{}\n",
        means[n_wbc] > means[n_wbc + 1]
    ));
    out.add_text("spectra_summary.txt", &summary);
    for (k, (name, z, n)) in spectra.cells.iter().enumerate() {
        let table = || spectrum_table(z, n);
        if k <= n_wbc {
            out.add_table(&format!("fig6_{name}.csv"), table())?;
        }
        if k < n_wbc || k == n_wbc + 1 {
            out.add_table(&format!("fig7_{name}.csv"), table())?;
        }
    }
    Ok(())
}
