//! Run configuration, experiment presets and the `plan`, `eval` and
//! `spectrum` pipelines behind the command-line tool.

mod config;
mod presets;
mod run;

pub use config::{
    apply_override, merge_json, resolve_config, resolve_config_value, AnalyticReference, MapSource, MeshSource, Overrides, RunConfig, StateBox,
};
pub use presets::{preset, PRESETS};
pub use run::{
    analytic_metric, build_map, build_mesh, run_eval, run_plan, run_spectrum, OptimizerSummary, Pipeline, RunReport,
};

use crate::error::{Error, ErrorKind};

/// Process exit code for a failed run.
pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Numerical => 3,
        ErrorKind::Io => 4,
    }
}
