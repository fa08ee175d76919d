//! Report generation: rolling averages over session series, summary
//! aggregation, and the multi-objective metrics table.

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use mmlab_core::pareto::{
    combined_front_attribution, hypervolume_2d, minmax_normalize, pareto_filter, sparsity,
    ObjectivePoint,
};

/// Rolling mean with the given window; entries earlier than a full window
/// average whatever history exists (truncated mean).
pub fn rolling_mean(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1);
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, &x) in series.iter().enumerate() {
        sum += x;
        if i >= window {
            sum -= series[i - window];
        }
        let n = (i + 1).min(window);
        out.push(sum / n as f64);
    }
    out
}

/// Per-label aggregate over per-session rows, as written to summary.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAggregate {
    pub label: String,
    pub sessions: usize,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub mean_terminal_mtm: f64,
    pub std_terminal_mtm: f64,
    pub mean_abs_inventory: f64,
    pub mean_cash_inventory_ratio: f64,
}

pub fn aggregate_sessions(
    rows: &[mmlab_core::experiment::SessionSummary],
) -> Vec<LabelAggregate> {
    let mut by_label: BTreeMap<&str, Vec<&mmlab_core::experiment::SessionSummary>> =
        BTreeMap::new();
    for r in rows {
        by_label.entry(r.label.as_str()).or_default().push(r);
    }
    by_label
        .into_iter()
        .map(|(label, rows)| {
            let n = rows.len() as f64;
            let mean = |f: &dyn Fn(&mmlab_core::experiment::SessionSummary) -> f64| {
                rows.iter().map(|r| f(r)).sum::<f64>() / n
            };
            let std = |f: &dyn Fn(&mmlab_core::experiment::SessionSummary) -> f64, mu: f64| {
                (rows.iter().map(|r| (f(r) - mu).powi(2)).sum::<f64>() / n).sqrt()
            };
            let mean_reward = mean(&|r| r.mean_reward);
            let mean_mtm = mean(&|r| r.terminal_mtm as f64);
            LabelAggregate {
                label: label.to_string(),
                sessions: rows.len(),
                mean_reward,
                std_reward: std(&|r| r.mean_reward, mean_reward),
                mean_terminal_mtm: mean_mtm,
                std_terminal_mtm: std(&|r| r.terminal_mtm as f64, mean_mtm),
                mean_abs_inventory: mean(&|r| r.mean_abs_inventory),
                mean_cash_inventory_ratio: mean(&|r| r.cash_inventory_ratio),
            }
        })
        .collect()
}

/// A labeled point set as stored in points.json by the weight sweeps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledPoints {
    pub tag: String,
    pub points: Vec<ObjectivePoint>,
}

/// One row of the multi-objective metrics table.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub experiment: String,
    pub hypervolume: f64,
    pub sparsity_avg: f64,
    pub sparsity_std: f64,
    pub undominated: usize,
    pub undominated_share: f64,
}

/// Computes the metrics table over labeled point sets: per-set normalized
/// hypervolume against the Nadir point of its own front, per-set front
/// sparsity, and undominated counts on the pooled front.
pub fn metrics_table(sets: &[LabeledPoints], margin: f64) -> Result<Vec<MetricsRow>> {
    if sets.is_empty() {
        bail!("no point sets to evaluate");
    }
    // Normalize all points together so hypervolumes share one scale.
    let all: Vec<ObjectivePoint> = sets.iter().flat_map(|s| s.points.clone()).collect();
    if all.is_empty() {
        bail!("point sets are empty");
    }
    let (_, transforms) = minmax_normalize(&all, margin);

    let labeled: Vec<(String, Vec<ObjectivePoint>)> = sets
        .iter()
        .map(|s| (s.tag.clone(), s.points.clone()))
        .collect();
    let attribution = combined_front_attribution(&labeled);
    let pooled_front_size: usize = attribution.iter().map(|(_, c)| c).sum();

    let mut rows = Vec::new();
    for set in sets {
        let normalized: Vec<ObjectivePoint> = set
            .points
            .iter()
            .map(|p| ObjectivePoint {
                mtm_score: apply_axis(&transforms[0], p.mtm_score),
                inv_score: apply_axis(&transforms[1], p.inv_score),
                tag: p.tag.clone(),
            })
            .collect();
        let front_set = pareto_filter(&normalized);
        let front: Vec<ObjectivePoint> = front_set.front().into_iter().cloned().collect();
        // Nadir point: per-axis worst of this set's own front.
        let nadir = (
            front
                .iter()
                .map(|p| p.mtm_score)
                .fold(f64::INFINITY, f64::min),
            front
                .iter()
                .map(|p| p.inv_score)
                .fold(f64::INFINITY, f64::min),
        );
        let hv = hypervolume_2d(&front, nadir)
            .map_err(|e| anyhow::anyhow!("hypervolume for '{}': {e}", set.tag))?;
        // Sparsity on the raw (unnormalized) front, like the headline
        // table's distance scale.
        let raw_front_set = pareto_filter(&set.points);
        let raw_front: Vec<ObjectivePoint> =
            raw_front_set.front().into_iter().cloned().collect();
        let sp = sparsity(&raw_front);
        let sp_std = sparsity_std(&raw_front, sp);
        let undominated = attribution
            .iter()
            .find(|(tag, _)| tag == &set.tag)
            .map(|(_, c)| *c)
            .unwrap_or(0);
        rows.push(MetricsRow {
            experiment: set.tag.clone(),
            hypervolume: hv,
            sparsity_avg: sp,
            sparsity_std: sp_std,
            undominated,
            undominated_share: if pooled_front_size == 0 {
                0.0
            } else {
                undominated as f64 / pooled_front_size as f64
            },
        });
    }
    Ok(rows)
}

fn apply_axis(t: &mmlab_core::pareto::AxisTransform, x: f64) -> f64 {
    if t.max == t.min {
        return 0.5;
    }
    (x - t.min) / (t.max - t.min) * (1.0 + t.margin)
}

/// Standard deviation of nearest-neighbor distances around the sparsity
/// mean.
fn sparsity_std(front: &[ObjectivePoint], mean: f64) -> f64 {
    if front.len() < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (i, p) in front.iter().enumerate() {
        let mut nearest = f64::INFINITY;
        for (j, q) in front.iter().enumerate() {
            if i != j {
                let dx = p.mtm_score - q.mtm_score;
                let dy = p.inv_score - q.inv_score;
                nearest = nearest.min((dx * dx + dy * dy).sqrt());
            }
        }
        acc += (nearest - mean).powi(2);
    }
    (acc / front.len() as f64).sqrt()
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "experiment",
        "hypervolume",
        "sparsity_avg",
        "sparsity_std",
        "undominated",
        "undominated_share",
    ])?;
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            r.hypervolume.to_string(),
            r.sparsity_avg.to_string(),
            r.sparsity_std.to_string(),
            r.undominated.to_string(),
            r.undominated_share.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rolling_mean_of_constant_is_constant() {
        let series = vec![3.5; 100];
        let rolled = rolling_mean(&series, 50);
        assert!(rolled.iter().all(|&x| (x - 3.5).abs() < 1e-12));
    }

    #[test]
    fn rolling_mean_truncates_short_history() {
        let series = vec![1.0, 2.0, 3.0, 4.0];
        let rolled = rolling_mean(&series, 3);
        assert_eq!(rolled[0], 1.0);
        assert_eq!(rolled[1], 1.5);
        assert_eq!(rolled[2], 2.0);
        assert_eq!(rolled[3], 3.0);
    }

    #[test]
    fn metrics_table_counts_undominated_per_label() {
        let sets = vec![
            LabeledPoints {
                tag: "strong".into(),
                points: vec![
                    ObjectivePoint::new(10.0, -1.0, "strong"),
                    ObjectivePoint::new(8.0, -0.5, "strong"),
                ],
            },
            LabeledPoints {
                tag: "weak".into(),
                points: vec![
                    ObjectivePoint::new(5.0, -2.0, "weak"),
                    ObjectivePoint::new(4.0, -3.0, "weak"),
                ],
            },
        ];
        let rows = metrics_table(&sets, 0.05).unwrap();
        assert_eq!(rows[0].undominated, 2);
        assert_eq!(rows[1].undominated, 0);
        assert!(rows[0].hypervolume >= 0.0);
    }
}
