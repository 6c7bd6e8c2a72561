//! Desk-scale simulator for a quasi-stationary fluid–structure interaction
//! system with vessel-wall growth, posed in the Lagrangian reference
//! configuration. The coupled nonlinear problem is split into three linear
//! sub-solvers (nonstationary Stokes, quasi-stationary elasticity with a
//! growth-integral constraint, two-domain transmission diffusion) plus
//! pointwise growth ODEs, iterated to a fixed point over whole space-time
//! trajectories.

pub mod quadrature;
pub mod mesh;
pub mod fem;
pub mod linsolve;
pub mod norms;
pub mod materials;
pub mod smallmat;
pub mod kinematics;
pub mod assemble;
pub mod fluid;
pub mod solid;
pub mod cells;
pub mod coupling;

/// Spatial dimension of the built discretization. Tensor kernels are written
/// dimension-generically; 3d variants are exercised in unit tests only.
pub const DIM: usize = 2;
