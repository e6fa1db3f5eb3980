//! Dataset-level evaluation and the JSON metric report.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use occlugrid_core::metrics::{
    aggregate, class_counts, ClassReport, MetricReport, SampleMetrics, Support,
};
use occlugrid_core::params::ModelParams;

use crate::errors::{CliError, CliResult};
use crate::model::{ModelDriver, RunSample};

/// Scores one sample: thresholded class counts plus image similarity.
pub fn score_sample(
    driver: &ModelDriver,
    params: &ModelParams,
    rs: &RunSample,
    support: Support,
) -> CliResult<SampleMetrics> {
    let pred = driver.forward(params, rs)?;
    Ok(class_counts(&pred, &rs.scene.ground_truth, &rs.scene.mask, support))
}

/// Evaluates every sample in parallel and pools the results.
pub fn evaluate(
    driver: &ModelDriver,
    params: &ModelParams,
    samples: &[RunSample],
    support: Support,
) -> CliResult<MetricReport> {
    if samples.is_empty() {
        return Err(CliError::Data("evaluation needs at least one sample".into()));
    }
    let per: Vec<SampleMetrics> = samples
        .par_iter()
        .map(|rs| score_sample(driver, params, rs, support))
        .collect::<CliResult<_>>()?;
    aggregate(&per).ok_or_else(|| CliError::Data("evaluation produced no reports".into()))
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ClassRowDto {
    pub count: u64,
    pub accuracy: Option<f64>,
    pub mse: Option<f64>,
    pub is_score: Option<f64>,
}

/// Wire form of a metric report; the outer field names are fixed.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ReportDto {
    pub occ: ClassRowDto,
    pub free: ClassRowDto,
    pub overall: ClassRowDto,
    pub n_samples: u64,
}

fn row_dto(r: &ClassReport) -> ClassRowDto {
    ClassRowDto { count: r.count, accuracy: r.accuracy, mse: r.mse, is_score: r.is_score }
}

impl From<&MetricReport> for ReportDto {
    fn from(r: &MetricReport) -> Self {
        ReportDto {
            occ: row_dto(&r.occ),
            free: row_dto(&r.free),
            overall: row_dto(&r.overall),
            n_samples: r.n_samples,
        }
    }
}

/// One-line JSON rendering of a report, newline-terminated.
pub fn report_json(r: &MetricReport) -> String {
    let mut s = serde_json::to_string(&ReportDto::from(r)).expect("report serialization");
    s.push('\n');
    s
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => "n/a".into(),
    }
}

/// Human-readable overall row, used in log lines and summaries.
pub fn overall_summary(r: &MetricReport) -> String {
    format!(
        "Acc {} MSE {} IS {} (overall)",
        fmt_opt(r.overall.accuracy),
        fmt_opt(r.overall.mse),
        fmt_opt(r.overall.is_score)
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_json_has_the_fixed_field_names() {
        let row = ClassReport { count: 4, accuracy: Some(0.75), mse: Some(0.1), is_score: None };
        let report = MetricReport { occ: row, free: row, overall: row, n_samples: 2 };
        let json = report_json(&report);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["occ", "free", "overall", "n_samples"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["overall"]["accuracy"], 0.75);
        assert!(v["occ"]["is_score"].is_null());
        assert!(json.ends_with('\n'));
    }

    #[test]
    fn summaries_spell_out_missing_scores() {
        let row = ClassReport { count: 0, accuracy: None, mse: None, is_score: None };
        let report = MetricReport { occ: row, free: row, overall: row, n_samples: 1 };
        assert_eq!(overall_summary(&report), "Acc n/a MSE n/a IS n/a (overall)");
    }
}
