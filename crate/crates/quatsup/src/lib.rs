//! Numerical companion to the sup-norm problem on compact arithmetic
//! surfaces coming from indefinite rational quaternion algebras.
//!
//! The crate covers the constructive layers of that story end to end:
//!
//! * exact arithmetic in (a,b/Q), ramification and the division test
//!   ([`quat`], [`hilbert`], [`embed`]);
//! * orders, their certification and invariants, and enumeration of the
//!   norm-n slices with unit-coset decomposition ([`order`], [`slice`]);
//! * multiprecision evaluation of the weighted kernels attached to the
//!   slices, with majorant, convexity and coset-identity diagnostics
//!   ([`kernel`]);
//! * the near-identity counting experiments and their K_z geometry
//!   ([`counting`]);
//! * eigenvalue-sequence algebra, the prime amplifier and the exponent
//!   ledger ([`amplifier`]).

pub mod amplifier;
pub mod counting;
pub mod embed;
pub mod error;
pub mod hilbert;
pub mod kernel;
pub mod mp;
pub mod order;
pub mod quadfield;
pub mod quat;
pub mod slice;

pub use error::{Error, Result};
pub use order::QuaternionOrder;
pub use quat::{AlgebraParams, RationalQuaternion};
