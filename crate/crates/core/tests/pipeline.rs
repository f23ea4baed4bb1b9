use focusim_core::flow::{solve_flow, FlowBoundaryConditions, FluidProperties};
use focusim_core::geometry::{build_geometry, rasterize, GeometryParams};
use focusim_core::sweep::{run_pipeline, run_sweep, PipelineConfig, SweepSpec};
use focusim_core::tracer::{
    integrate, CellSpecies, IntegrationOptions, Particle, ParticleModel, Termination,
};
use focusim_core::{Executor, Sequential, Vec2};
use proptest::prelude::*;

/// Runs jobs back to front, to show results do not depend on order.
struct Reversed;

impl Executor for Reversed {
    fn map_indexed<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        let mut out: Vec<(usize, R)> = (0..n).rev().map(|k| (k, f(k))).collect();
        out.sort_by_key(|(k, _)| *k);
        out.into_iter().map(|(_, r)| r).collect()
    }
}

fn short_design() -> PipelineConfig {
    let mut cfg = PipelineConfig::final_design();
    cfg.geometry.main_length_um = 3_000.0;
    cfg.geometry.junction_um = 1_000.0;
    cfg.tracer.particles = 24;
    cfg
}

fn tracer_at(y: f64, id: usize) -> Particle {
    Particle {
        id,
        species: 0,
        diameter_um: 6.0,
        density_kg_per_m3: 1070.0,
        position: Vec2::new(5.0, y),
        velocity: Vec2::ZERO,
        release_time_s: 0.0,
    }
}

#[test]
fn mirrored_releases_cross_mirrored() {
    let g = build_geometry(&GeometryParams {
        main_length_um: 3_000.0,
        junction_um: 1_000.0,
        ..GeometryParams::final_design()
    })
    .unwrap();
    let grid = rasterize(&g, 50.0 / 16.0).unwrap();
    let bc = FlowBoundaryConditions {
        v1_um_per_s: 500.0,
        v2_um_per_s: 5000.0,
    };
    let flow = solve_flow(&grid, &FluidProperties::default(), &bc, g.side_width_um()).unwrap();
    let opts = IntegrationOptions {
        dt_s: 0.05,
        t_max_s: 60.0,
        model: ParticleModel::Tracer,
        electrode_x_um: Some(g.electrode_um()),
        fluid: FluidProperties::default(),
    };
    for y in [6.0, 12.5, 20.0, 24.0] {
        let a = integrate(&tracer_at(y, 0), &flow, &opts).unwrap();
        let b = integrate(&tracer_at(50.0 - y, 1), &flow, &opts).unwrap();
        let (ca, cb) = (a.crossing.unwrap(), b.crossing.unwrap());
        assert!((ca.y_um + cb.y_um - 50.0).abs() < 1e-6, "y {y}");
        assert!((ca.t_s - cb.t_s).abs() < 1e-6 * ca.t_s);
        assert_eq!(a.termination, Termination::Outlet);
    }
}

#[test]
fn tracers_only_move_downstream_and_all_are_kept() {
    let cfg = short_design();
    let run = run_pipeline(&cfg, &Sequential).unwrap();
    assert_eq!(run.trajectories.len(), run.particles.len());
    for (p, tr) in run.particles.iter().zip(&run.trajectories) {
        assert_eq!(p.id, tr.particle_id);
        assert_eq!(p.species, tr.species);
        for w in tr.samples.windows(2) {
            assert!(
                w[1].x_um >= w[0].x_um - 1e-9,
                "particle {} moved upstream",
                p.id
            );
            assert!(w[1].t_s > w[0].t_s);
        }
        assert!(tr.crossing.is_some());
    }
}

#[test]
fn executor_order_does_not_change_results() {
    let cfg = short_design();
    let a = run_pipeline(&cfg, &Sequential).unwrap();
    let b = run_pipeline(&cfg, &Reversed).unwrap();
    assert_eq!(a.trajectories, b.trajectories);
    assert_eq!(a.metrics, b.metrics);
}

#[test]
fn single_point_sweep_equals_single_run() {
    let mut cfg = short_design();
    cfg.tracer.seed = 11;
    let spec = SweepSpec {
        base: cfg.clone(),
        parameter: "V2".into(),
        values: vec![3000.0],
        particles: cfg.tracer.particles,
        seed: 11,
        replicates: 1,
    };
    let swept = run_sweep(&spec, &Reversed).unwrap();
    cfg.flow.v2_um_per_s = 3000.0;
    let single = run_pipeline(&cfg, &Sequential).unwrap();
    assert_eq!(swept.rows.len(), 1);
    assert_eq!(swept.rows[0].metrics, Some(single.metrics));
}

#[test]
fn two_species_counts_follow_largest_remainder() {
    let mut cfg = short_design();
    cfg.species = vec![CellSpecies::neutrophil(), CellSpecies::lymphocyte()];
    let a = run_pipeline(&cfg, &Sequential).unwrap();
    assert!(a.trajectories.iter().all(|t| t.crossing.is_some()));
    // 24 * 0.62 / 0.95 = 15.66 and 24 * 0.33 / 0.95 = 8.34
    let n0 = a.particles.iter().filter(|p| p.species == 0).count();
    assert_eq!((n0, a.particles.len() - n0), (16, 8));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn sensing_time_scales_inversely_with_inlet_speeds(k in 0.5..4.0f64) {
        let base = short_design();
        let mut fast = base.clone();
        fast.flow.v1_um_per_s *= k;
        fast.flow.v2_um_per_s *= k;
        fast.tracer.dt_s /= k;
        let a = run_pipeline(&base, &Sequential).unwrap().metrics;
        let b = run_pipeline(&fast, &Sequential).unwrap().metrics;
        prop_assert!((b.t_s * k / a.t_s - 1.0).abs() < 1e-3, "{} vs {}", b.t_s * k, a.t_s);
        prop_assert!((b.dy_max_um - a.dy_max_um).abs() < 1e-3 * a.dy_max_um);
    }

    #[test]
    fn velocities_scale_linearly_with_inlet_speeds(k in 0.1..20.0f64, x in 50.0..2900.0f64, s in 0.1..0.9f64) {
        let g = build_geometry(&GeometryParams {
            main_length_um: 3_000.0,
            junction_um: 1_000.0,
            ..GeometryParams::final_design()
        })
        .unwrap();
        let grid = rasterize(&g, 50.0 / 8.0).unwrap();
        let fl = FluidProperties::default();
        let bc = FlowBoundaryConditions { v1_um_per_s: 500.0, v2_um_per_s: 5000.0 };
        let scaled = FlowBoundaryConditions { v1_um_per_s: 500.0 * k, v2_um_per_s: 5000.0 * k };
        let a = solve_flow(&grid, &fl, &bc, 50.0).unwrap();
        let b = solve_flow(&grid, &fl, &scaled, 50.0).unwrap();
        let p = Vec2::new(x, 50.0 * s);
        let (va, vb) = (a.sample_velocity(p).unwrap(), b.sample_velocity(p).unwrap());
        let scale = 500.0 * k;
        prop_assert!((vb.x - k * va.x).abs() <= 1e-9 * scale);
        prop_assert!((vb.y - k * va.y).abs() <= 1e-9 * scale);
    }
}
