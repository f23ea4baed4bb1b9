//! Cell populations and their trajectories through the channel.

mod forces;
mod integrate;
mod population;
mod species;

pub use forces::{drag_force, relaxation_time_s, saffman_lift};
pub use integrate::{
    integrate, trace_population, CarrierFlow, Crossing, IntegrationOptions, LinearShearFlow,
    ParticleModel, Termination, Trajectory, TrajectorySample, UniformFlow,
};
pub use population::{sample_population, Particle, Placement, ReleaseMode, ReleaseRegion};
pub use species::{default_population, wbc_panel, CellClass, CellSpecies};
