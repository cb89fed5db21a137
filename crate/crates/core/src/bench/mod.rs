//! Long-context QA benchmarking: needle-in-a-haystack and multiple-choice
//! suites, prompt assembly for the three settings, scoring and metrics.

pub mod dataset;
pub mod haystack;
pub mod metrics;
pub mod oracle;
pub mod prompt;
pub mod record;
pub mod run;
pub mod score;
pub mod synth;
pub mod truncate;

pub use dataset::{Complexity, Letter, McqInstance, McqOptions, NeedleSpec};
pub use haystack::{build_haystack, Haystack, HaystackBuilder, HaystackError, HaystackSpec, DEFAULT_POSITIONS};
pub use metrics::{accuracy_table, deltas, extremum_drop_rate, AccuracyTable, GroupBy, MetricError, Percent};
pub use prompt::{assemble_prompt, AssembledPrompt, PromptMode};
pub use record::{context_length_label, Bucket, EvalRecord};
pub use run::{
    run_eval, Answer, EvalError, EvalInstance, EvalOptions, EvalOutcome, EvalSuite, PositionSelection, TagContext,
};
pub use score::{score_contains, score_mcq, McqScore};
pub use truncate::{truncate_and_filter, Truncation};
