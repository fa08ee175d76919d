//! Pareto-dominance tooling and the multi-objective comparison metrics:
//! exact 2-D hypervolume, sparsity, and undominated-solution counting.
//!
//! Both axes are maximized. The inventory objective is therefore encoded as
//! `-mean |inventory|` upstream, so that a better inventory score is a
//! larger number.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// One evaluated policy in objective space, tagged with its source
/// algorithm or weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectivePoint {
    pub mtm_score: f64,
    /// Inventory objective, higher is better (e.g. `-mean |inventory|`).
    pub inv_score: f64,
    pub tag: String,
}

impl ObjectivePoint {
    pub fn new(mtm_score: f64, inv_score: f64, tag: &str) -> Self {
        debug_assert!(mtm_score.is_finite() && inv_score.is_finite());
        Self {
            mtm_score,
            inv_score,
            tag: String::from(tag),
        }
    }

    fn coords(&self) -> (f64, f64) {
        (self.mtm_score, self.inv_score)
    }
}

/// Strict Pareto dominance under maximization: `p` is at least as good on
/// both axes and strictly better on at least one.
pub fn dominates(p: &ObjectivePoint, q: &ObjectivePoint) -> bool {
    let ge = p.mtm_score >= q.mtm_score && p.inv_score >= q.inv_score;
    let gt = p.mtm_score > q.mtm_score || p.inv_score > q.inv_score;
    ge && gt
}

/// A point set with per-point undominated flags.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontSet {
    pub points: Vec<ObjectivePoint>,
    pub undominated: Vec<bool>,
}

impl FrontSet {
    /// The undominated points only.
    pub fn front(&self) -> Vec<&ObjectivePoint> {
        self.points
            .iter()
            .zip(&self.undominated)
            .filter(|(_, &u)| u)
            .map(|(p, _)| p)
            .collect()
    }
}

/// Flags exactly the points not strictly dominated by any other point.
/// Duplicate points do not dominate each other, so equal points are both
/// kept on the front.
pub fn pareto_filter(points: &[ObjectivePoint]) -> FrontSet {
    let undominated = points
        .iter()
        .map(|p| !points.iter().any(|q| dominates(q, p)))
        .collect();
    FrontSet {
        points: points.to_vec(),
        undominated,
    }
}

/// Per-axis affine transform record from min-max normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AxisTransform {
    pub min: f64,
    pub max: f64,
    pub margin: f64,
}

impl AxisTransform {
    fn apply(&self, x: f64) -> f64 {
        if self.max == self.min {
            // Degenerate axis: every value maps to the middle.
            return 0.5;
        }
        (x - self.min) / (self.max - self.min) * (1.0 + self.margin)
    }
}

/// Min-max normalizes each axis into `[0, 1 + margin]`, returning the
/// normalized points and the per-axis transforms used.
pub fn minmax_normalize(
    points: &[ObjectivePoint],
    margin: f64,
) -> (Vec<ObjectivePoint>, [AxisTransform; 2]) {
    assert!(!points.is_empty());
    let fold = |f: fn(&ObjectivePoint) -> f64| -> (f64, f64) {
        points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(f(p)), hi.max(f(p)))
        })
    };
    let (x_min, x_max) = fold(|p| p.mtm_score);
    let (y_min, y_max) = fold(|p| p.inv_score);
    let tx = AxisTransform { min: x_min, max: x_max, margin };
    let ty = AxisTransform { min: y_min, max: y_max, margin };
    let normalized = points
        .iter()
        .map(|p| ObjectivePoint {
            mtm_score: tx.apply(p.mtm_score),
            inv_score: ty.apply(p.inv_score),
            tag: p.tag.clone(),
        })
        .collect();
    (normalized, [tx, ty])
}

#[derive(Debug, Clone, PartialEq)]
pub enum HypervolumeError {
    /// A point sits below the reference on some axis.
    PointBelowReference { index: usize },
    EmptyFront,
}

impl core::fmt::Display for HypervolumeError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            HypervolumeError::PointBelowReference { index } => {
                write!(f, "point #{index} does not dominate the reference point")
            }
            HypervolumeError::EmptyFront => write!(f, "hypervolume of an empty front"),
        }
    }
}

/// Exact 2-D hypervolume: the area of the union of rectangles spanned by
/// the reference point and each front point, computed by sweeping the
/// points in descending x order. Every point must lie at or above the
/// reference on both axes.
pub fn hypervolume_2d(
    front: &[ObjectivePoint],
    reference: (f64, f64),
) -> Result<f64, HypervolumeError> {
    if front.is_empty() {
        return Err(HypervolumeError::EmptyFront);
    }
    for (i, p) in front.iter().enumerate() {
        if p.mtm_score < reference.0 || p.inv_score < reference.1 {
            return Err(HypervolumeError::PointBelowReference { index: i });
        }
    }
    let mut pts: Vec<(f64, f64)> = front.iter().map(ObjectivePoint::coords).collect();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let mut area = 0.0;
    let mut covered_y = reference.1;
    for (x, y) in pts {
        if y > covered_y {
            area += (x - reference.0) * (y - covered_y);
            covered_y = y;
        }
    }
    Ok(area)
}

/// Mean distance from each point to its nearest other point; a single
/// point has sparsity 0 by convention.
pub fn sparsity(front: &[ObjectivePoint]) -> f64 {
    if front.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for (i, p) in front.iter().enumerate() {
        let mut nearest = f64::INFINITY;
        for (j, q) in front.iter().enumerate() {
            if i == j {
                continue;
            }
            let dx = p.mtm_score - q.mtm_score;
            let dy = p.inv_score - q.inv_score;
            nearest = nearest.min(libm::sqrt(dx * dx + dy * dy));
        }
        total += nearest;
    }
    total / front.len() as f64
}

/// Per-label counts of undominated points after pooling all labeled sets
/// into one front. Ties (identical points across labels) are weakly
/// dominated only, so both copies count.
pub fn combined_front_attribution(
    labeled_sets: &[(String, Vec<ObjectivePoint>)],
) -> Vec<(String, usize)> {
    let pooled: Vec<ObjectivePoint> = labeled_sets
        .iter()
        .flat_map(|(label, pts)| {
            pts.iter().map(move |p| ObjectivePoint {
                mtm_score: p.mtm_score,
                inv_score: p.inv_score,
                tag: label.clone(),
            })
        })
        .collect();
    let front = pareto_filter(&pooled);
    labeled_sets
        .iter()
        .map(|(label, _)| {
            let count = front
                .points
                .iter()
                .zip(&front.undominated)
                .filter(|(p, &u)| u && p.tag == *label)
                .count();
            (label.clone(), count)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn pt(x: f64, y: f64) -> ObjectivePoint {
        ObjectivePoint::new(x, y, "t")
    }

    #[test]
    fn dominance_cases() {
        assert!(dominates(&pt(2.0, 2.0), &pt(1.0, 1.0)));
        assert!(!dominates(&pt(2.0, 0.0), &pt(0.0, 2.0)));
        assert!(!dominates(&pt(0.0, 2.0), &pt(2.0, 0.0)));
        // Strictness: a point never dominates itself.
        assert!(!dominates(&pt(1.0, 1.0), &pt(1.0, 1.0)));
    }

    #[test]
    fn filter_keeps_exactly_the_undominated() {
        let pts = vec![pt(2.0, 0.0), pt(0.0, 2.0), pt(1.0, 1.0), pt(0.5, 0.5)];
        let fs = pareto_filter(&pts);
        assert_eq!(fs.undominated, vec![true, true, true, false]);
    }

    #[test]
    fn single_point_is_its_own_front() {
        let fs = pareto_filter(&[pt(3.0, -1.0)]);
        assert_eq!(fs.undominated, vec![true]);
    }

    #[test]
    fn duplicates_are_both_kept() {
        let fs = pareto_filter(&[pt(1.0, 1.0), pt(1.0, 1.0), pt(0.5, 0.5)]);
        assert_eq!(fs.undominated, vec![true, true, false]);
    }

    #[test]
    fn normalize_two_points_hit_extremes() {
        let (norm, _) = minmax_normalize(&[pt(10.0, 5.0), pt(20.0, 1.0)], 0.0);
        assert_eq!((norm[0].mtm_score, norm[0].inv_score), (0.0, 1.0));
        assert_eq!((norm[1].mtm_score, norm[1].inv_score), (1.0, 0.0));
    }

    #[test]
    fn normalize_preserves_dominance() {
        let pts = vec![pt(5.0, 9.0), pt(3.0, 7.0), pt(8.0, 2.0), pt(1.0, 1.0)];
        let (norm, _) = minmax_normalize(&pts, 0.05);
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                assert_eq!(
                    dominates(&pts[i], &pts[j]),
                    dominates(&norm[i], &norm[j]),
                    "dominance changed for ({i}, {j})"
                );
            }
        }
    }

    #[test]
    fn normalize_degenerate_axis_maps_to_half() {
        let (norm, _) = minmax_normalize(&[pt(4.0, 1.0), pt(4.0, 2.0)], 0.0);
        assert_eq!(norm[0].mtm_score, 0.5);
        assert_eq!(norm[1].mtm_score, 0.5);
    }

    #[test]
    fn hypervolume_unit_square() {
        let hv = hypervolume_2d(&[pt(1.0, 1.0)], (0.0, 0.0)).unwrap();
        assert_eq!(hv, 1.0);
    }

    #[test]
    fn hypervolume_inclusion_exclusion() {
        let hv = hypervolume_2d(&[pt(1.0, 0.5), pt(0.5, 1.0)], (0.0, 0.0)).unwrap();
        // 0.5 + 0.5 - 0.25
        assert!((hv - 0.75).abs() < 1e-12);
    }

    #[test]
    fn hypervolume_rejects_point_below_reference() {
        let err = hypervolume_2d(&[pt(1.0, -0.1)], (0.0, 0.0)).unwrap_err();
        assert_eq!(err, HypervolumeError::PointBelowReference { index: 0 });
    }

    #[test]
    fn hypervolume_ignores_dominated_points() {
        let base = hypervolume_2d(&[pt(1.0, 0.5), pt(0.5, 1.0)], (0.0, 0.0)).unwrap();
        let with_dominated =
            hypervolume_2d(&[pt(1.0, 0.5), pt(0.5, 1.0), pt(0.4, 0.4)], (0.0, 0.0)).unwrap();
        assert_eq!(base, with_dominated);
    }

    #[test]
    fn sparsity_cases() {
        assert_eq!(sparsity(&[pt(1.0, 1.0)]), 0.0);
        // Two points at distance d -> d.
        assert!((sparsity(&[pt(0.0, 0.0), pt(3.0, 4.0)]) - 5.0).abs() < 1e-12);
        // Three collinear points spaced d apart -> nearest is d for all.
        let s = sparsity(&[pt(0.0, 0.0), pt(2.0, 0.0), pt(4.0, 0.0)]);
        assert!((s - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sparsity_invariant_under_rigid_motion() {
        let pts = vec![pt(0.0, 0.0), pt(1.0, 2.0), pt(3.0, 1.0), pt(4.0, 4.0)];
        let base = sparsity(&pts);
        // Translate by (10, -7) and rotate by 30 degrees.
        let (sin, cos) = (0.5, libm::sqrt(3.0) / 2.0);
        let moved: Vec<ObjectivePoint> = pts
            .iter()
            .map(|p| {
                let (x, y) = (p.mtm_score, p.inv_score);
                pt(cos * x - sin * y + 10.0, sin * x + cos * y - 7.0)
            })
            .collect();
        assert!((sparsity(&moved) - base).abs() < 1e-9);
    }

    #[test]
    fn attribution_disjoint_dominating_set() {
        let sets = vec![
            (
                "winner".to_string(),
                vec![pt(10.0, 10.0), pt(11.0, 9.0)],
            ),
            ("loser".to_string(), vec![pt(1.0, 1.0), pt(2.0, 0.0)]),
        ];
        let counts = combined_front_attribution(&sets);
        assert_eq!(counts, vec![("winner".to_string(), 2), ("loser".to_string(), 0)]);
    }

    #[test]
    fn attribution_counts_cross_label_duplicates_twice() {
        let sets = vec![
            ("a".to_string(), vec![pt(5.0, 5.0)]),
            ("b".to_string(), vec![pt(5.0, 5.0)]),
        ];
        let counts = combined_front_attribution(&sets);
        assert_eq!(counts, vec![("a".to_string(), 1), ("b".to_string(), 1)]);
    }
}
