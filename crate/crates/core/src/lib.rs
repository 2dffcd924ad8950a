//! Monotone-systems toolkit: cone orders, certification of monotonicity with
//! respect to a polyhedral cone, integration, equilibrium curves and the
//! Lyapunov function built from them.

pub mod certify;
pub mod cli;
pub mod cone;
pub mod equilibria;
pub mod expr;
pub mod geometry;
pub mod integrate;
pub mod lyapunov;
pub mod numerics;
pub mod system;
