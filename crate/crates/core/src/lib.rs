//! Right-invariant magnetic geodesic flows on Lie groups and on Fourier-truncated
//! circle diffeomorphisms.
//!
//! * [`algebra`]: brackets, coadjoint operators, exponentials and the evolution map.
//! * [`magnetics`]: inertia operator, primitive α, σ = dα, Lorentz force, Mañé's critical value.
//! * [`flow`]: reduced magnetic Euler–Arnold and Hamiltonian integrators.
//! * [`finsler`]: the Randers metric above the critical value and two-point connections.
//! * [`epdiff`]: pseudospectral magnetic EPDiff on the circle.

pub mod algebra;
pub mod epdiff;
pub mod error;
pub mod finsler;
pub mod flow;
pub mod magnetics;
mod optim;

pub use algebra::{
    AlgebraVector, BracketConvention, CircleDiffeo, ControlPath, Covector, GroupKind, GroupPoint,
    LieAlgebra,
};
pub use error::{Error, Result};
pub use magnetics::{mane_critical_value, InertiaOperator, MagneticSystem, ManeResult};
