//! Gowers U³ analysis, high-rank quadratic factors and 4-term progression
//! counting over F_p^n.

pub mod error;
pub mod factor;
pub mod field;
pub mod function;
pub mod gowers;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod par;
pub mod quadratic;
pub mod regularize;
pub mod sets;
pub mod space;
pub mod transform;

pub use error::{Error, Result};
pub use factor::{Factor, LocalQuadraticFactor, QuadraticFactor};
pub use field::{FieldElement, Fp};
pub use function::SpaceFunction;
pub use quadratic::QuadraticForm;
pub use space::{AffineSpace, Point};
