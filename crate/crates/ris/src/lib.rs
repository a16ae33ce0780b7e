//! Solvers and a-posteriori diagnostics for finite-dimensional
//! rate-independent systems
//!
//! ```text
//! 0 in dR(z'(t)) + D_z I(t, z(t)),    z(0) = z0,
//! ```
//!
//! with a weighted-L1 dissipation potential `R` and a smooth, possibly
//! nonconvex energy `I`. Because `R` is positively 1-homogeneous the
//! evolution is rate independent: solutions can develop jumps, and
//! different incremental schemes select different limits.
//!
//! The crate provides
//!
//! * six incremental schemes ([`schemes`]): global minimisation, viscous
//!   and visco-energetic stepping, ball-constrained local minimisation,
//!   relaxed local minimisation and alternate minimisation for coupled
//!   models;
//! * arc-length parametrisation of the iterates ([`parametrize`]), under
//!   which jumps become finite-speed segments;
//! * discrete energy identities, complementarity integrals and a
//!   classifier for parametrised BV solutions ([`diagnostics`]);
//! * built-in example problems with analytic reference data and a
//!   brute-force oracle ([`problems`]);
//! * CSV export of traces and curves ([`export`]).
//!
//! # Example
//!
//! ```
//! use ris::metric::{Metric, MetricKind};
//! use ris::problems::make_toy51;
//! use ris::schemes::{run_local_min, SchemeConfig};
//!
//! let (e, d, z0) = make_toy51(1.0).unwrap();
//! let m = Metric::identity(MetricKind::V, 1);
//! let cfg = SchemeConfig::local_min(0.1);
//! let trace = run_local_min(&e, &d, &m, &z0, &cfg).unwrap();
//! // the state climbs from 2 towards 4 while time stands still
//! assert_eq!(trace.nodes[1].t, 0.0);
//! assert!((trace.nodes[1].z[0] - 2.1).abs() < 1e-8);
//! ```

pub mod diagnostics;
pub mod dissipation;
pub mod energy;
pub mod error;
pub mod export;
pub mod inner;
pub mod metric;
pub mod parametrize;
pub mod problems;
pub mod quadrature;
pub mod schemes;

pub use dissipation::Dissipation;
pub use energy::{CoupledEnergyModel, Energy, EnergyModel, Load, Nonlinearity};
pub use error::{Result, RisError};
pub use metric::{Metric, MetricKind};
pub use parametrize::ParametrizedCurve;
pub use schemes::{RunTrace, SchemeConfig, SchemeKind, Termination};

/// Keeps the guide's code samples compiling; each chapter of `book/` runs
/// as a doctest.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(model, "../../../book/src/model.md");
    chapter!(schemes, "../../../book/src/schemes.md");
    chapter!(parametrization, "../../../book/src/parametrization.md");
    chapter!(diagnostics, "../../../book/src/diagnostics.md");
    chapter!(cli, "../../../book/src/cli.md");
}
