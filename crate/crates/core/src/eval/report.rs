use serde::{Deserialize, Serialize};

use super::{Metrics, MetricsReport};
use crate::types::{ModelId, ResolutionTag};

/// One table row: a classifier (single model or fusion) and its metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub name: String,
    pub metrics: MetricsReport,
}

impl ClassifierReport {
    pub fn model(model: ModelId, metrics: MetricsReport) -> Self {
        ClassifierReport {
            name: model.to_string(),
            metrics,
        }
    }

    /// Named `Fused (a + b + …)` after the models it combines.
    pub fn fused(metrics: MetricsReport) -> Self {
        let names: Vec<&str> = metrics.models.iter().map(|m| m.as_str()).collect();
        ClassifierReport {
            name: format!("Fused ({})", names.join(" + ")),
            metrics,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
}

fn pct(m: &Metrics) -> String {
    format!("{:.2}%", 100.0 * m.accuracy)
}

/// Renders the rows as a markdown table (`Classifier | Accuracy | LogLoss`,
/// plus `Low Res Videos | High Res Videos` accuracy columns when any row
/// has a resolution breakdown) or as pretty-printed JSON.
pub fn render_report(reports: &[ClassifierReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(reports).expect("reports serialize") + "\n"
        }
        ReportFormat::Markdown => markdown(reports),
    }
}

fn markdown(reports: &[ClassifierReport]) -> String {
    let by_tag = reports.iter().any(|r| !r.metrics.breakdown.is_empty());
    let mut out = String::from("| Classifier | Accuracy | LogLoss |");
    let mut rule = String::from("| --- | ---: | ---: |");
    if by_tag {
        out.push_str(" Low Res Videos | High Res Videos |");
        rule.push_str(" ---: | ---: |");
    }
    out.push('\n');
    out.push_str(&rule);
    out.push('\n');
    for r in reports {
        let m = &r.metrics;
        out.push_str(&format!("| {} | {} | {:.5} |", r.name, pct(&m.overall), m.overall.log_loss));
        if by_tag {
            for tag in [ResolutionTag::Low, ResolutionTag::High] {
                let cell = m.breakdown.get(&tag).map_or_else(|| "n/a".to_string(), pct);
                out.push_str(&format!(" {cell} |"));
            }
        }
        out.push('\n');
    }
    out
}
