//! Experiment orchestration: configuration, seeded pipeline runs and the
//! self-check suite.

mod config;
mod run;
mod selfcheck;

pub use config::{ExperimentConfig, KEYS};
pub use run::{
    dataset_dir, load_dataset, mean_std, pretrain_collection, run, run_collection, task_seeds, PretrainRecord, RunReport, Setting,
    SettingReport, TaskRow, SUMMARY_HEADER, TASK_HEADER,
};
pub use selfcheck::{
    link_pred_expression, random_expression, random_graph, FaultySquare, SelfCheck, SelfCheckReport, DEFAULT_STEP,
    DEFAULT_TOLERANCE,
};
