//! Metrics, published-reference comparison and error analysis.

mod errors;
mod metrics;
mod reference;

pub use errors::{
    case_id, category_report, group_by_utterance, resolved_errors, unanimous_errors, Annotations,
    Category, CategoryReport, CategoryResolution, CategoryRow, Direction, ErrorCase,
    ModelPredictions, ResolutionReport,
};
pub use metrics::{
    confusion_by_emotion, f1, micro_macro, ConfusionCounts, EmotionScore, EvalReport, Prf,
    ReportMeta, TABLE_COLUMNS,
};
pub use reference::{
    compare_to_reference, format_delta, Comparison, DeltaCell, EmotionF1, ReferenceRow,
    ReferenceTable, COMPARISON_LABEL,
};
