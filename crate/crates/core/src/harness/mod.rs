//! Leave-one-subject-out evaluation, reporting, and verification suites.

mod config;
mod gradsuite;
mod loso;
mod report;
mod table;

pub use config::{DataSource, RunConfig};
pub use gradsuite::{gradcheck_suite, GradSuiteEntry, GradSuiteReport, GRAD_STEP, GRAD_TOL};
pub use loso::{run_loso, AuditEntry, FoldOutcome, FoldResult, LosoRun};
pub use report::{population_std, LosoReport, SubjectRow};
pub use table::{emit_table, parse_table_csv, TableColumn};
