//! Burst phase response toolkit for the Hindmarsh-Rose bursting neuron.

pub mod adjoint;
pub mod bifurcation;
pub mod direct;
pub mod export;
pub mod integrate;
pub mod isochron;
pub mod model;
pub mod orbit;

pub use integrate::{integrate, Crossing, Direction, EventSpec, IntegrateError, IntegratorConfig, Method, Trajectory};
pub use model::{
    augmented_rhs, equilibrium_h_of_v, fast_jacobian, fast_rhs, full_jacobian, full_rhs, AugmentedState,
    AugmentedSystem, FastState, FastSystem, FullState, FullSystem, ModelParams, ParamError, Polarity, SynapseParams,
};
pub use orbit::{
    extract_spike_template, find_burst_orbit, find_fast_orbit, BurstOrbit, OrbitConfig, OrbitError, PeriodicOrbit,
    SpikeOrbit, SpikeTemplate,
};
