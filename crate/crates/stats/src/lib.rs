//! Statistical evaluation of generated bitstreams.

pub mod clt;
pub mod nist;
pub mod special;
pub mod suite;

pub use clt::{clt_frequency_test, CltError, CltReport};
pub use nist::{run_test, TestId, TestParams, TestResult, TestStatus};
pub use suite::{
    run_suite, ProportionRule, SuiteConfig, SuiteError, TestReport, TestSummary, Verdict,
};
