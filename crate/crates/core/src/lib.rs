//! Exact collider bias for nine binary causal structures.
//!
//! * [`structures`]: the structures, their parameters and validation.
//! * [`joint`]: the brute-force oracle over the full joint distribution.
//! * [`closedform`]: closed-form bias, with [`closedform::compute`] routing a
//!   query to a closed form or the oracle.
//! * [`signmap`]: sign rules, effect patterns and sign-map grids.
//! * [`verify`]: randomized closed-form versus oracle checks.
//! * [`cli`]: the `collider-bias` command line.
//!
//! ```
//! use collider_bias::closedform::compute;
//! use collider_bias::structures::{
//!     BiasQuery, ColliderTable, Level, Scale, StructureKind, StructureParams, Var,
//! };
//!
//! let mut p = StructureParams::uniform(StructureKind::V, 0.5);
//! p.p_c_given = ColliderTable::new(0.15, 0.25, 0.25, 0.75);
//! let p = p.validate(true)?;
//! let cov = compute(&p, &BiasQuery::stratum(Var::C, Level::One, Scale::Cov))?;
//! assert!((cov.value - 5.0 / 196.0).abs() < 1e-15);
//! # Ok::<(), collider_bias::Error>(())
//! ```

pub mod cli;
pub mod closedform;
pub mod error;
pub mod joint;
pub mod signmap;
pub mod structures;
pub mod verify;

pub use error::{Error, Result};

// The guide's code listings run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/structures.md")]
    mod structures {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/stratum.md")]
    mod stratum {}
    #[doc = include_str!("../../../book/src/regression.md")]
    mod regression {}
    #[doc = include_str!("../../../book/src/signs.md")]
    mod signs {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
