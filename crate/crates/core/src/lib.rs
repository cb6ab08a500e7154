//! Variable-exponent Triebel-Lizorkin spaces associated with the Hermite
//! operator `H = -Δ + |x|^2`, computed at desk scale.

pub mod atoms;
pub mod decomposition;
pub mod error;
pub mod grid;
pub mod hermite;
pub mod operators;
pub mod quadrature;
pub mod report;
pub mod scheme;
pub mod semigroup;
pub mod suites;
pub mod testfns;
pub mod tlspace;
pub mod varexp;

pub use error::{Error, Result};
pub use grid::{Grid, GridEvaluator};
pub use hermite::{eigenvalue, eval_hermite, expand, synthesize, HermiteExpansion, MultiIndex};
pub use scheme::{SamplingScheme, SchemeParams};
pub use varexp::{luxemburg_norm, mixed_norm, ExponentField, ExponentRule, LevelFamily};
pub use tlspace::{seq_norm, tl_norm, CoefficientSet, DyadicCube, NormBreakdown};
pub use decomposition::{calderon_reconstruct, molecular_decompose, synthesize_molecules, DecomposeParams, Decomposition, MoleculeDescriptor};
pub use operators::{bessel_potential, riesz_potential, spectral_multiplier, MultiplierProfile};
pub use testfns::TestFunction;
pub use atoms::{make_smooth_atom, SmoothAtom};
pub use suites::{run_battery, BatteryConfig, SuiteOutcome};
