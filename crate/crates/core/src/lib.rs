//! Polynomial symmetry breakers for 0-1 integer programs, with a bin-packing
//! benchmark generator, exact verification oracles and a small
//! branch-and-bound solver.

pub mod binpack;
pub mod breakers;
pub mod io;
pub mod model;
pub mod perm;
pub mod poly;
pub mod solver;
pub mod verify;

pub use binpack::{BinPackingInstance, SizeBoundaries};
pub use breakers::{BreakerFamily, SizeProfile, Template};
pub use model::IpModel;
pub use perm::{KroneckerPerm, Permutation, VarLayout};
pub use poly::Polynomial;
