//! Benchmarks: the linear datamodeling score, counterfactual top-k removal,
//! the output-function correlation experiment, and report rendering.

pub mod counterfactual;
pub mod lds;
pub mod stats;
pub mod svg;

pub use counterfactual::{
    run_counterfactual, run_output_function_experiment, CounterfactualConfig,
    CounterfactualReport, OutputFnConfig, OutputFnReport,
};
pub use lds::{
    frozen_loss, plan_subsets, predict_output, run_lds, LdsConfig, LdsReport, SubsetPlan,
};
pub use stats::{mean, midranks, pearson, spearman, spearman_or_zero, std_dev};
pub use svg::write_bar_chart;
