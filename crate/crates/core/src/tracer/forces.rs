use crate::flow::FluidProperties;
use crate::Vec2;

const UM: f64 = 1e-6;

/// Stokes drag `3 pi mu d (u_f - u_p)` in N for a diameter in um and a slip
/// velocity in um/s.
pub fn drag_force(diameter_um: f64, slip_um_per_s: Vec2, viscosity_pa_s: f64) -> Vec2 {
    let k = 3.0 * core::f64::consts::PI * viscosity_pa_s * diameter_um * UM * UM;
    slip_um_per_s * k
}

/// Saffman shear lift (N), transverse to the flow:
/// `1.615 mu d^2 slip_x sign(shear) sqrt(|shear| / nu)`.
pub fn saffman_lift(
    diameter_um: f64,
    slip_x_um_per_s: f64,
    shear_rate_per_s: f64,
    fluid: &FluidProperties,
) -> f64 {
    if slip_x_um_per_s == 0.0 || shear_rate_per_s == 0.0 {
        return 0.0;
    }
    let d = diameter_um * UM;
    let nu = fluid.kinematic_viscosity();
    1.615
        * fluid.viscosity_pa_s
        * d
        * d
        * (slip_x_um_per_s * UM)
        * libm::copysign(1.0, shear_rate_per_s)
        * libm::sqrt(libm::fabs(shear_rate_per_s) / nu)
}

/// Particle momentum relaxation time `rho_p d^2 / (18 mu)` in s.
pub fn relaxation_time_s(diameter_um: f64, density_kg_per_m3: f64, viscosity_pa_s: f64) -> f64 {
    let d = diameter_um * UM;
    density_kg_per_m3 * d * d / (18.0 * viscosity_pa_s)
}
