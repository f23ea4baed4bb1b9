use alloc::vec::Vec;

use super::forces::{drag_force, relaxation_time_s, saffman_lift};
use super::population::Particle;
use crate::exec::Executor;
use crate::flow::{FlowField, FluidProperties};
use crate::{Error, Result, Vec2};

/// Velocity field a particle is carried by.
pub trait CarrierFlow: Sync {
    /// Fluid velocity (um/s) at `p` (um).
    fn velocity(&self, p: Vec2) -> Result<Vec2>;
    /// du/dy (1/s) at `p`.
    fn shear_rate(&self, p: Vec2) -> Result<f64>;
    fn contains(&self, _p: Vec2) -> bool {
        true
    }
    /// Distance to the nearest wall within `radius` and the unit normal
    /// pointing away from it.
    fn nearest_wall(&self, _p: Vec2, _radius: f64) -> Option<(f64, Vec2)> {
        None
    }
    fn outlet_x_um(&self) -> f64 {
        f64::INFINITY
    }
    /// Spacing of the underlying discretization (um), if any.
    fn resolution_um(&self) -> f64 {
        f64::INFINITY
    }
}

impl CarrierFlow for FlowField {
    fn velocity(&self, p: Vec2) -> Result<Vec2> {
        self.sample_velocity(p)
    }
    fn shear_rate(&self, p: Vec2) -> Result<f64> {
        FlowField::shear_rate(self, p)
    }
    fn contains(&self, p: Vec2) -> bool {
        self.grid().contains_fluid_point(p)
    }
    fn nearest_wall(&self, p: Vec2, radius: f64) -> Option<(f64, Vec2)> {
        self.grid().nearest_wall(p, radius)
    }
    fn outlet_x_um(&self) -> f64 {
        let g = self.grid();
        g.origin().x + g.nx() as f64 * g.spacing_um()
    }
    fn resolution_um(&self) -> f64 {
        self.grid().spacing_um()
    }
}

/// Unbounded uniform stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformFlow {
    pub velocity: Vec2,
}

impl CarrierFlow for UniformFlow {
    fn velocity(&self, _p: Vec2) -> Result<Vec2> {
        Ok(self.velocity)
    }
    fn shear_rate(&self, _p: Vec2) -> Result<f64> {
        Ok(0.0)
    }
}

/// Unbounded simple shear `u = base + shear * y`, `v = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearShearFlow {
    pub base_um_per_s: f64,
    pub shear_per_s: f64,
}

impl CarrierFlow for LinearShearFlow {
    fn velocity(&self, p: Vec2) -> Result<Vec2> {
        Ok(Vec2::new(self.base_um_per_s + self.shear_per_s * p.y, 0.0))
    }
    fn shear_rate(&self, _p: Vec2) -> Result<f64> {
        Ok(self.shear_per_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParticleModel {
    /// Massless limit: the particle moves with the local fluid velocity.
    /// Steps are limited to a quarter cell of travel.
    Tracer,
    /// `m dv/dt = F_drag + F_lift`, classical RK4 with fixed step.
    Inertial { lift: bool },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationOptions {
    /// Step (inertial) or maximum step (tracer), s.
    pub dt_s: f64,
    /// Integration time after release, s.
    pub t_max_s: f64,
    pub model: ParticleModel,
    /// Plane whose first passage is recorded.
    pub electrode_x_um: Option<f64>,
    pub fluid: FluidProperties,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Termination {
    Outlet,
    TimeLimit,
    /// Could not be kept one radius clear of the walls.
    WallContact,
    /// Velocity lookup failed away from the outlet.
    LeftFluid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t_s: f64,
    pub x_um: f64,
    pub y_um: f64,
    pub u_um_per_s: f64,
    pub v_um_per_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub t_s: f64,
    pub y_um: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub particle_id: usize,
    pub species: usize,
    pub diameter_um: f64,
    pub release_time_s: f64,
    pub samples: Vec<TrajectorySample>,
    pub crossing: Option<Crossing>,
    pub termination: Termination,
}

impl Trajectory {
    /// Position at clock time `t`, or `None` when the particle is not in
    /// the channel at that time.
    pub fn position_at(&self, t: f64) -> Option<Vec2> {
        let first = self.samples.first()?;
        let last = self.samples.last()?;
        if t < first.t_s || t > last.t_s {
            return None;
        }
        let k = self.samples.partition_point(|s| s.t_s < t);
        if k == 0 {
            return Some(Vec2::new(first.x_um, first.y_um));
        }
        let (a, b) = (&self.samples[k - 1], &self.samples[k]);
        let f = if b.t_s > a.t_s {
            (t - a.t_s) / (b.t_s - a.t_s)
        } else {
            1.0
        };
        Some(Vec2::new(
            a.x_um + f * (b.x_um - a.x_um),
            a.y_um + f * (b.y_um - a.y_um),
        ))
    }

    pub fn final_sample(&self) -> &TrajectorySample {
        self.samples
            .last()
            .expect("trajectory has at least the release sample")
    }
}

struct Dynamics<'a, F: CarrierFlow + ?Sized> {
    flow: &'a F,
    fluid: FluidProperties,
    diameter_um: f64,
    /// 1/tau (1/s)
    inv_tau: f64,
    /// 1/m (1/kg)
    inv_mass: f64,
    lift: bool,
}

impl<F: CarrierFlow + ?Sized> Dynamics<'_, F> {
    /// Acceleration in um/s^2.
    fn accel(&self, x: Vec2, v: Vec2) -> Result<Vec2> {
        let uf = self.flow.velocity(x)?;
        let slip = uf - v;
        let mut a = slip * self.inv_tau;
        if self.lift {
            let shear = self.flow.shear_rate(x)?;
            let fy = saffman_lift(self.diameter_um, slip.x, shear, &self.fluid);
            a.y += fy * self.inv_mass * 1e6;
        }
        Ok(a)
    }

    fn rk4(&self, x: Vec2, v: Vec2, dt: f64) -> Result<(Vec2, Vec2)> {
        let a1 = self.accel(x, v)?;
        let (x2, v2) = (x + v * (0.5 * dt), v + a1 * (0.5 * dt));
        let a2 = self.accel(x2, v2)?;
        let (x3, v3) = (x + v2 * (0.5 * dt), v + a2 * (0.5 * dt));
        let a3 = self.accel(x3, v3)?;
        let (x4, v4) = (x + v3 * dt, v + a3 * dt);
        let a4 = self.accel(x4, v4)?;
        let x_new = x + (v + v2 * 2.0 + v3 * 2.0 + v4) * (dt / 6.0);
        let v_new = v + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0);
        Ok((x_new, v_new))
    }
}

fn tracer_rk4<F: CarrierFlow + ?Sized>(flow: &F, x: Vec2, dt: f64) -> Result<Vec2> {
    let k1 = flow.velocity(x)?;
    let k2 = flow.velocity(x + k1 * (0.5 * dt))?;
    let k3 = flow.velocity(x + k2 * (0.5 * dt))?;
    let k4 = flow.velocity(x + k3 * dt)?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Keeps the center one radius away from walls, removing the inward normal
/// velocity. Returns false when that is impossible.
fn resolve_walls<F: CarrierFlow + ?Sized>(flow: &F, x: &mut Vec2, v: &mut Vec2, r: f64) -> bool {
    for _ in 0..4 {
        match flow.nearest_wall(*x, r) {
            Some((dist, n)) if dist < r * (1.0 - 1e-9) => {
                *x += n * (r - dist);
                let vn = v.dot(n);
                if vn < 0.0 {
                    *v = *v - n * vn;
                }
            }
            _ => return true,
        }
    }
    false
}

/// Integrates one particle from its release until it leaves through the
/// outlet, reaches `t_max_s` after release, or cannot continue.
pub fn integrate<F: CarrierFlow + ?Sized>(
    particle: &Particle,
    flow: &F,
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    if !(opts.dt_s > 0.0) {
        return Err(Error::invalid("dt_s", "must be > 0"));
    }
    if !(opts.t_max_s >= 0.0) {
        return Err(Error::invalid("t_max_s", "must be >= 0"));
    }
    let x0 = particle.position;
    if !flow.contains(x0) {
        return Err(Error::ReleaseOutsideFluid {
            x_um: x0.x,
            y_um: x0.y,
        });
    }
    let mu = opts.fluid.viscosity_pa_s;
    let tau = relaxation_time_s(particle.diameter_um, particle.density_kg_per_m3, mu);
    if let ParticleModel::Inertial { .. } = opts.model {
        if opts.dt_s > tau / 10.0 {
            return Err(Error::StepUnstable {
                dt_s: opts.dt_s,
                limit_s: tau / 10.0,
            });
        }
    }
    let d_m = particle.diameter_um * 1e-6;
    let mass = particle.density_kg_per_m3 * core::f64::consts::PI / 6.0 * d_m * d_m * d_m;
    let dyn_ = Dynamics {
        flow,
        fluid: opts.fluid,
        diameter_um: particle.diameter_um,
        inv_tau: 1.0 / tau,
        inv_mass: 1.0 / mass,
        lift: matches!(opts.model, ParticleModel::Inertial { lift: true }),
    };
    // sanity: the drag law and relaxation time agree
    debug_assert!({
        let f = drag_force(particle.diameter_um, Vec2::new(1.0, 0.0), mu).x;
        libm::fabs(f / mass * 1e6 * tau - 1.0) < 1e-9
    });

    let radius = 0.5 * particle.diameter_um;
    let outlet = flow.outlet_x_um();
    let h = flow.resolution_um();
    let t_end = particle.release_time_s + opts.t_max_s;
    let mut t = particle.release_time_s;
    let mut x = x0;
    let mut v = match opts.model {
        ParticleModel::Tracer => flow.velocity(x)?,
        ParticleModel::Inertial { .. } => particle.velocity,
    };
    let mut samples = Vec::new();
    let record = |samples: &mut Vec<TrajectorySample>, t: f64, x: Vec2, v: Vec2| {
        samples.push(TrajectorySample {
            t_s: t,
            x_um: x.x,
            y_um: x.y,
            u_um_per_s: v.x,
            v_um_per_s: v.y,
        })
    };
    record(&mut samples, t, x, v);
    let mut crossing = None;
    let termination = loop {
        if x.x >= outlet {
            break Termination::Outlet;
        }
        let remaining = t_end - t;
        if remaining <= 1e-12 * opts.dt_s.max(t_end.abs() * 1e-3) {
            break Termination::TimeLimit;
        }
        let mut step = opts.dt_s.min(remaining);
        let stepped = match opts.model {
            ParticleModel::Tracer => {
                let speed = v.norm();
                if speed > 0.0 && h.is_finite() {
                    step = step.min(0.25 * h / speed);
                }
                tracer_rk4(flow, x, step).map(|xn| (xn, Vec2::ZERO))
            }
            ParticleModel::Inertial { .. } => dyn_.rk4(x, v, step),
        };
        let (mut xn, mut vn) = match stepped {
            Ok(s) => s,
            Err(Error::PointOutsideFluid { .. }) => {
                if x.x + 2.0 * h.min(1e9) >= outlet || x.x + v.x * step >= outlet {
                    break Termination::Outlet;
                }
                break Termination::LeftFluid;
            }
            Err(e) => return Err(e),
        };
        if !resolve_walls(flow, &mut xn, &mut vn, radius) {
            t += step;
            record(&mut samples, t, xn, vn);
            break Termination::WallContact;
        }
        if let ParticleModel::Tracer = opts.model {
            vn = match flow.velocity(xn) {
                Ok(u) => u,
                Err(_) if xn.x >= outlet - h => v,
                Err(_) => {
                    t += step;
                    record(&mut samples, t, xn, v);
                    break Termination::LeftFluid;
                }
            };
        }
        if let (Some(xe), None) = (opts.electrode_x_um, crossing) {
            if x.x < xe && xn.x >= xe {
                let f = (xe - x.x) / (xn.x - x.x);
                crossing = Some(Crossing {
                    t_s: t + f * step,
                    y_um: x.y + f * (xn.y - x.y),
                });
            }
        }
        t += step;
        x = xn;
        v = vn;
        record(&mut samples, t, x, v);
    };
    Ok(Trajectory {
        particle_id: particle.id,
        species: particle.species,
        diameter_um: particle.diameter_um,
        release_time_s: particle.release_time_s,
        samples,
        crossing,
        termination,
    })
}

/// Integrates every particle independently; output order follows input.
pub fn trace_population<F: CarrierFlow + ?Sized, E: Executor>(
    particles: &[Particle],
    flow: &F,
    opts: &IntegrationOptions,
    exec: &E,
) -> Result<Vec<Trajectory>> {
    exec.map_indexed(particles.len(), |k| integrate(&particles[k], flow, opts))
        .into_iter()
        .collect()
}
