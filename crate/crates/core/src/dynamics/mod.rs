//! Equations of motion of the spanning tree, their closed-loop reduction
//! and the rolling-contact model.

pub mod contact;
pub mod rigid;
pub mod spatial;

pub use contact::{closed_loop_dynamics, contact_frame, friction_matrix, ClosedLoopDynamics, DynamicsError};
pub use rigid::{
    generalized_gravity, inverse_dynamics, kinetic_energy, mass_matrix, point_jacobian, potential_energy,
    spanning_tree_dynamics, SpanningTreeDynamics, TreeMatrix,
};
