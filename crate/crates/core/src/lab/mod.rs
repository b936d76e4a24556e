//! Reports that combine certified bounds and simulation estimates.

mod examples;
mod mrca_suite;
mod report;

pub use examples::{
    example1_model, example1_suite, example2_model, example2_suite, smallest_fixed_point,
    Example1Report, Example1Row, Example2Report, Example2Row, Method, EXAMPLE_ENUMERATION_LIMIT,
};
pub use mrca_suite::{
    horizon_seed, mrca_regime_suite, Estimate, MrcaPoint, MrcaRegimeReport, RegimeSummary,
    DEFAULT_DELTA,
};
pub use report::{
    monotone_rho, positivity_diagnostics, rho_report, CertifiedRho, EstimatedRho, MonotoneRho,
    OrderingCheck, PositivityDiagnostics, RhoReport, ORDERING_TOL,
};
