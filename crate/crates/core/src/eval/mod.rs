//! Evaluation: accuracy metrics with middle-90% trimming, the demographic
//! bias audit, the classifier two-sample test for missing-at-random labels,
//! and the digitization cost model.

mod bias;
mod c2st;
mod cost;
mod metrics;

pub use bias::{bias_audit, load_tract_mapping, pearson, save_tract_mapping, BiasAuditReport, BiasRow, ParcelOutcome, TractTable};
pub use c2st::{c2st_mar_test, c2st_p_value, C2stOptions, C2stResult};
pub use cost::{cost_estimate, CostReport, CostScenario};
pub use metrics::{
    compute_metrics, evaluate, metrics_table, middle_90_bounds, quantile_sorted, trim_middle_90, trim_with_bounds,
    EvaluationReport, MetricsReport,
};
