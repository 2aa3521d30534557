//! Batch reproduction harness: experiment files in, iteration and timing
//! tables out.

pub mod config;
pub mod report;
pub mod run;

pub use config::{parse_config, ConfigError, ExperimentConfig, PrecondSpec, ProblemSpec};
pub use report::{emit_report, parse_csv, Format};
pub use run::{run_experiment, ReportRow};

/// Experiment files shipped with the harness, by name.
pub const PRESETS: &[(&str, &str)] = &[
    ("table21", include_str!("../presets/table21.cfg")),
    ("table22", include_str!("../presets/table22.cfg")),
    ("table31", include_str!("../presets/table31.cfg")),
    ("table32", include_str!("../presets/table32.cfg")),
    ("table53-chain", include_str!("../presets/table53-chain.cfg")),
    ("scaling-cube", include_str!("../presets/scaling-cube.cfg")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
