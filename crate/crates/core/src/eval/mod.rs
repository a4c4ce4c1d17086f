mod cost;
mod experiment;
mod metrics;

pub use cost::{
    estimate_cost, mlp_forward_macs, uniform_discriminator_macs, CostModel, CostQuery,
};
pub use metrics::{normalized_std, rmse, NormalizedStd, QuartileSummary};
pub use experiment::{
    check_isolation, run_experiment, run_experiment1, run_experiment2, run_seed, split_seed,
    summarize, write_results_csv, CellSummary, ChosenLocalizer, Environment, EnvironmentDelta,
    ExperimentConfig, ExperimentOutput, ExperimentSummary, LocalizerPlan, Method, RunResult,
    TrainingProfile,
};
