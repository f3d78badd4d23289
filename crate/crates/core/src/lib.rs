//! Sesqui-holomorphic kernels, the Hermitian metrics they induce, and checks of
//! their invariance under domain automorphisms.

pub mod automorphism;
pub mod distance;
pub mod domain;
pub mod error;
pub mod eval;
pub mod gram;
pub mod holo;
pub mod invariance;
pub mod kernel;
pub mod metric;
pub mod oracle;
pub mod parse;
pub mod quadrature;
pub mod wirtinger;

pub use domain::{CPoint, Domain, DomainKind};
pub use error::{Error, Result};
pub use eval::{compile, compile_str, Jet, KernelEvaluator, PointMap, SesquiKernel};
pub use kernel::KernelExpr;
