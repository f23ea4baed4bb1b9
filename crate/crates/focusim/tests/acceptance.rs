//! Acceptance checks, one line per criterion. Run with
//! `cargo test -p focusim --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use focusim::commands::run_classification;
use focusim::fixtures::check_fixtures;
use focusim::{parse_config, parse_config_str, run, Command, Overrides, RayonExecutor};
use focusim_core::flow::{solve_flow, FlowBoundaryConditions, FluidProperties};
use focusim_core::geometry::{build_geometry, rasterize, rasterize_straight, GeometryParams};
use focusim_core::impedance::{
    complex_conductivity, default_frequencies, impedance_of, log_sweep, normalized, spectrum,
    DielectricDomain,
};
use focusim_core::sweep::{check_trends, run_sweep, PipelineConfig, SweepSpec, TrendExpectation};
use focusim_core::tracer::{
    integrate, relaxation_time_s, saffman_lift, CellSpecies, IntegrationOptions, LinearShearFlow,
    Particle, ParticleModel, UniformFlow,
};
use focusim_core::Vec2;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn poiseuille() -> Outcome {
    let start = Instant::now();
    let y = 50.0;
    let g = build_geometry(&GeometryParams::final_design()).unwrap();
    let grid = rasterize_straight(&g, y / 32.0).unwrap();
    let u_mean = 500.0;
    let bc = FlowBoundaryConditions {
        v1_um_per_s: u_mean,
        v2_um_per_s: 0.0,
    };
    let f = solve_flow(&grid, &FluidProperties::default(), &bc, y).unwrap();
    let elapsed = start.elapsed();
    let x = 0.5 * g.electrode_um();
    let u_max = (0..=400)
        .map(|k| {
            f.sample_velocity(Vec2::new(x, y * k as f64 / 400.0))
                .unwrap()
                .x
        })
        .fold(f64::MIN, f64::max);
    let ratio = u_max / u_mean;
    let balance = (f.outflow_flux() - f.inflow_flux()).abs() / f.inflow_flux();
    let div = f.max_divergence() / (u_mean / grid.spacing_um());
    check(
        (ratio - 1.5).abs() <= 0.015 && balance <= 1e-3 && div <= 1e-8 && elapsed < Duration::from_secs(30),
        format!(
            "u_max/u_mean {ratio:.5}, mass imbalance {balance:.2e}, divergence {div:.2e} U/h, {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn linearity() -> Outcome {
    let g = build_geometry(&GeometryParams::final_design()).unwrap();
    let grid = rasterize(&g, 50.0 / 16.0).unwrap();
    let fl = FluidProperties::default();
    let bc = FlowBoundaryConditions {
        v1_um_per_s: 500.0,
        v2_um_per_s: 5000.0,
    };
    let big = FlowBoundaryConditions {
        v1_um_per_s: 5000.0,
        v2_um_per_s: 50000.0,
    };
    let a = solve_flow(&grid, &fl, &bc, g.side_width_um()).unwrap();
    let b = solve_flow(&grid, &fl, &big, g.side_width_um()).unwrap();
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for i in 0..200 {
        for j in 1..20 {
            let p = Vec2::new(10.0 + 49.9 * i as f64, 2.5 * j as f64);
            let (va, vb) = (a.sample_velocity(p).unwrap(), b.sample_velocity(p).unwrap());
            for (x, y) in [(va.x, vb.x), (va.y, vb.y)] {
                let scale = (10.0 * x).abs().max(1e-6 * 5000.0);
                worst = worst.max((y - 10.0 * x).abs() / scale);
            }
            n += 1;
        }
    }
    check(
        worst <= 1e-3,
        format!("{n} points, worst relative deviation {worst:.2e}"),
    )
}

fn relaxation() -> Outcome {
    let fl = FluidProperties::default();
    let (d, rho) = (10.0, 1070.0);
    let tau = relaxation_time_s(d, rho, fl.viscosity_pa_s);
    let u_f = 1000.0;
    let exact = u_f * (1.0 - (-3.0f64).exp());
    let at = |frac: f64| {
        let p = Particle {
            id: 0,
            species: 0,
            diameter_um: d,
            density_kg_per_m3: rho,
            position: Vec2::ZERO,
            velocity: Vec2::ZERO,
            release_time_s: 0.0,
        };
        let opts = IntegrationOptions {
            dt_s: tau * frac,
            t_max_s: 3.0 * tau,
            model: ParticleModel::Inertial { lift: true },
            electrode_x_um: None,
            fluid: fl,
        };
        let flow = UniformFlow {
            velocity: Vec2::new(u_f, 0.0),
        };
        integrate(&p, &flow, &opts)
            .unwrap()
            .final_sample()
            .u_um_per_s
    };
    let v50 = at(1.0 / 50.0);
    let rel = (v50 / exact - 1.0).abs();
    let ratio = (v50 - exact).abs() / (at(1.0 / 100.0) - exact).abs();
    check(
        rel < 0.01 && ratio >= 12.0,
        format!("v(3 tau) error {rel:.2e} at tau/50, halving ratio {ratio:.1}"),
    )
}

fn lift() -> Outcome {
    let fl = FluidProperties::default();
    let zero_shear = saffman_lift(10.0, 50.0, 0.0, &fl);
    let zero_slip = saffman_lift(10.0, 0.0, 200.0, &fl);
    let (d, slip, g) = (10.0e-6, 50.0e-6, 200.0);
    let oracle = 1.615
        * fl.viscosity_pa_s
        * d
        * d
        * slip
        * (g / (fl.viscosity_pa_s / fl.density_kg_per_m3)).sqrt();
    let got = saffman_lift(10.0, 50.0, 200.0, &fl);
    let flipped = saffman_lift(10.0, 50.0, -200.0, &fl);

    let tau = relaxation_time_s(10.0, 1070.0, fl.viscosity_pa_s);
    let p = Particle {
        id: 0,
        species: 0,
        diameter_um: 10.0,
        density_kg_per_m3: 1070.0,
        position: Vec2::ZERO,
        velocity: Vec2::ZERO,
        release_time_s: 0.0,
    };
    let opts = IntegrationOptions {
        dt_s: tau / 20.0,
        t_max_s: 2.0 * tau,
        model: ParticleModel::Inertial { lift: true },
        electrode_x_um: None,
        fluid: fl,
    };
    let shear = LinearShearFlow {
        base_um_per_s: 1000.0,
        shear_per_s: 500.0,
    };
    let drift = integrate(&p, &shear, &opts)
        .unwrap()
        .final_sample()
        .v_um_per_s;
    check(
        zero_shear == 0.0
            && zero_slip == 0.0
            && (got / oracle - 1.0).abs() < 1e-12
            && flipped == -got
            && drift > 0.0,
        format!(
            "zero shear {zero_shear}, zero slip {zero_slip}, F {got:.3e} N vs {oracle:.3e} N, lagging particle drifts +y at {drift:.2e} um/s"
        ),
    )
}

fn sweep_spec(parameter: &str, values: &[f64], set: impl Fn(&mut PipelineConfig)) -> SweepSpec {
    let mut base = PipelineConfig::final_design();
    set(&mut base);
    SweepSpec {
        base,
        parameter: parameter.into(),
        values: values.to_vec(),
        particles: 60,
        seed: 1,
        replicates: 1,
    }
}

fn trends(exec: &RayonExecutor) -> Outcome {
    let start = Instant::now();
    let specs = [
        sweep_spec("X1", &[3000.0, 5000.0, 8000.0], |c| {
            c.flow.v1_um_per_s = 100.0;
            c.flow.v2_um_per_s = 500.0;
            c.geometry.main_width_um = 150.0;
        }),
        sweep_spec("V2", &[1000.0, 2000.0, 5000.0], |c| {
            c.flow.v1_um_per_s = 500.0;
            c.geometry.junction_um = 5000.0;
            c.geometry.main_width_um = 150.0;
        }),
        sweep_spec("Y", &[50.0, 100.0, 150.0], |c| {
            c.flow.v1_um_per_s = 500.0;
            c.flow.v2_um_per_s = 5000.0;
        }),
    ];
    let mut all = true;
    let mut detail = Vec::new();
    for spec in &specs {
        let result = run_sweep(spec, exec).unwrap();
        let report = check_trends(
            &result,
            &TrendExpectation::for_axis(&spec.parameter).unwrap(),
        );
        all &= report.passed();
        let lines: Vec<String> = report.lines.iter().map(|l| l.render()).collect();
        detail.push(format!("{} [{}]", spec.parameter, lines.join("; ")));
    }
    let secs = start.elapsed().as_secs_f64();
    all &= secs < 600.0;
    check(all, format!("{} ({secs:.0} s)", detail.join(" ")))
}

fn fixtures() -> Outcome {
    let reports = check_fixtures().unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, rep) in &reports {
        let gated = !name.starts_with("table5");
        if gated {
            ok &= rep.passed();
        }
        detail.push(format!(
            "{name} {}{}",
            if rep.passed() { "PASS" } else { "FAIL" },
            if gated { "" } else { " (reported only)" }
        ));
    }
    check(ok, detail.join(", "))
}

fn parallel_plate(exec: &RayonExecutor) -> Outcome {
    let start = Instant::now();
    let dom = DielectricDomain {
        electrode_width_um: 500.0,
        ..DielectricDomain::default()
    };
    let freqs = default_frequencies();
    let s = spectrum(&dom, &freqs, 1.0, exec).unwrap();
    let mut worst: f64 = 0.0;
    for (f, z) in freqs.iter().zip(&s.z_ohm) {
        let sigma = complex_conductivity(&dom.medium, *f).norm();
        let exact = dom.gap_um * 1e-6 / (sigma * dom.length_um * 1e-6 * dom.depth_um * 1e-6);
        worst = worst.max((z.norm() / exact - 1.0).abs());
    }
    let im_dc = (s.z_ohm[0].im / s.z_ohm[0].re).abs();
    let secs = start.elapsed().as_secs_f64();
    check(
        freqs[0] == 0.0 && *freqs.last().unwrap() == 1e7 && worst < 5e-3 && im_dc < 1e-9 && secs < 60.0,
        format!(
            "{} frequencies 0..10 MHz, worst |Z| error {worst:.2e}, Im/Re at DC {im_dc:.1e}, {secs:.1} s",
            freqs.len()
        ),
    )
}

fn convergence() -> Outcome {
    let dom = DielectricDomain::default();
    let mcf7 = CellSpecies::mcf7();
    let cell = dom.with_inclusion(dom.center(), mcf7.mean_diameter_um, mcf7.dielectric());
    let coarse = impedance_of(&cell, 1e6, 1.0).unwrap().norm();
    let fine = impedance_of(&cell, 1e6, 0.5).unwrap().norm();
    let change = (coarse / fine - 1.0).abs();
    check(
        change < 0.01,
        format!(
            "|Z| at 1 MHz: h=1 {coarse:.2} ohm, h=0.5 {fine:.2} ohm, change {:.3}%",
            100.0 * change
        ),
    )
}

fn size_monotonicity(exec: &RayonExecutor) -> Outcome {
    let dom = DielectricDomain::default();
    let freqs = log_sweep(1e5, 1e7, 11, false);
    let empty = spectrum(&dom, &freqs, 1.0, exec).unwrap();
    let diameters = [6.58, 9.26, 9.42, 18.0];
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, mat) in [
        ("WBC", CellSpecies::neutrophil().dielectric()),
        ("MCF-7", CellSpecies::mcf7().dielectric()),
    ] {
        let n: Vec<f64> = diameters
            .iter()
            .map(|&d| {
                let z =
                    spectrum(&dom.with_inclusion(dom.center(), d, mat), &freqs, 1.0, exec).unwrap();
                normalized(&z, &empty).unwrap().band_mean(1e5, 1e7).unwrap()
            })
            .collect();
        ok &= n.windows(2).all(|w| w[0] < w[1]);
        let shown: Vec<String> = n.iter().map(|v| format!("{v:.5}")).collect();
        detail.push(format!("{name} {}", shown.join(" < ")));
    }
    check(ok, detail.join("; "))
}

fn manifest(rel: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn separation(exec: &RayonExecutor) -> Outcome {
    let cfg = parse_config(&manifest("configs/paper_final.json"))
        .unwrap()
        .resolve(Overrides::default())
        .unwrap();
    let c = run_classification(&cfg, exec).unwrap();
    let n = c.results.len();
    let ctc = c
        .truth
        .iter()
        .filter(|(_, k)| *k == focusim_core::tracer::CellClass::Ctc)
        .count();
    let ratio = c.separation_ratio().unwrap_or(f64::NAN);
    check(
        n == 40 && ctc > 0 && c.correct() == n,
        format!(
            "{}/{n} correct ({ctc} MCF-7), MCF-7 : worst WBC band-mean N = {ratio:.1} (reference claim > 3, {})",
            c.correct(),
            if ratio > 3.0 { "consistent" } else { "not met" }
        ),
    )
}

const SMALL: &str = r#"{
  "geometry": { "main_length_um": 3000, "junction_um": 1000 },
  "tracer": { "particles": 12, "seed": 5 },
  "species": [{ "preset": "lymphocyte" }, { "preset": "neutrophil" }, { "preset": "mcf7" }],
  "impedance": { "frequencies_hz": [0, 100000, 1000000, 10000000], "band_points": 3, "samples": 6 },
  "sweep": { "parameter": "V2", "values": [1000, 5000] }
}"#;

fn determinism() -> Outcome {
    let cfg = parse_config_str(SMALL)
        .unwrap()
        .resolve(Overrides::default())
        .unwrap();
    let one = RayonExecutor::new(Some(1)).unwrap();
    let two = RayonExecutor::new(Some(2)).unwrap();
    let mut files = 0;
    let mut bad = Vec::new();
    for cmd in [
        Command::Flow,
        Command::Trace,
        Command::Sweep,
        Command::Impedance,
        Command::Classify,
        Command::Report,
    ] {
        let a = run(cmd, &cfg, &one).unwrap();
        let b = run(cmd, &cfg, &two).unwrap();
        if a.files() != b.files() {
            bad.push(cmd.name());
        }
        files += a.files().len();
    }
    check(
        bad.is_empty(),
        format!("{files} files from 6 commands byte-identical across reruns (1 and 2 workers); differing: {bad:?}"),
    )
}

fn main() -> ExitCode {
    let exec = RayonExecutor::new(None).unwrap();
    let criteria: Vec<Criterion> = vec![
        ("flow oracle (plane Poiseuille)", Box::new(poiseuille)),
        ("Stokes linearity", Box::new(linearity)),
        ("particle relaxation oracle", Box::new(relaxation)),
        ("Saffman lift sanity", Box::new(lift)),
        (
            "trend reproduction (X1, V2, Y sweeps)",
            Box::new(|| trends(&exec)),
        ),
        ("fixture trend validation", Box::new(fixtures)),
        (
            "parallel-plate impedance oracle",
            Box::new(|| parallel_plate(&exec)),
        ),
        ("impedance grid convergence", Box::new(convergence)),
        (
            "size monotonicity of band-mean N",
            Box::new(|| size_monotonicity(&exec)),
        ),
        ("CTC/WBC separation", Box::new(|| separation(&exec))),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag} {name}: {detail}", k + 1);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
