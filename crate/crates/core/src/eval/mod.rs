//! Classification and detection metrics, and dataset balancing.

mod balance;
mod classification;
mod detection;
mod report;

pub use balance::{class_weights, class_weights_exact, undersample};
pub use classification::{classification_metrics, ClassificationMetrics, ConfusionMatrix};
pub use detection::{
    average_precision, detection_prf, evaluate_detections, map50, match_detections, pr_curve, DetectionReport,
    GroundTruthBox, MapResult, Match, PrCurve, PrPoint, Prf, MAP_IOU_THRESHOLD,
};
pub use report::{parse_metrics_csv, render_metrics_csv, MetricsRow, METRICS_HEADER};
