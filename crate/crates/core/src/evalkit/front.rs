//! Pareto fronts over (deaths, €) points and the normalized area metric.

use serde::{Deserialize, Serialize};

use crate::nsga2::dominates;

/// One evaluated policy (or policy-goal pair) in natural units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontPoint {
    pub policy_ref: String,
    /// β the point was evaluated at, for goal-conditioned policies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub health_mean: f64,
    pub eco_mean: f64,
    #[serde(default)]
    pub health_stderr: f64,
    #[serde(default)]
    pub eco_stderr: f64,
}

impl FrontPoint {
    pub fn costs(&self) -> [f64; 2] {
        [self.health_mean, self.eco_mean]
    }
}

/// Min-max bounds used to map both axes onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBounds {
    pub health: [f64; 2],
    pub eco: [f64; 2],
}

impl NormBounds {
    /// Tight bounds over `points`; `None` when empty.
    pub fn from_points<'a, I: IntoIterator<Item = &'a [f64; 2]>>(points: I) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = NormBounds {
            health: [first[0]; 2],
            eco: [first[1]; 2],
        };
        for p in it {
            b.health = [b.health[0].min(p[0]), b.health[1].max(p[0])];
            b.eco = [b.eco[0].min(p[1]), b.eco[1].max(p[1])];
        }
        Some(b)
    }

    pub fn union(self, other: NormBounds) -> NormBounds {
        NormBounds {
            health: [self.health[0].min(other.health[0]), self.health[1].max(other.health[1])],
            eco: [self.eco[0].min(other.eco[0]), self.eco[1].max(other.eco[1])],
        }
    }

    /// A degenerate axis (min = max) maps to 0.
    pub fn normalize(&self, p: [f64; 2]) -> [f64; 2] {
        let axis = |v: f64, [lo, hi]: [f64; 2]| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
        [axis(p[0], self.health), axis(p[1], self.eco)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    /// Non-dominated points sorted by deaths, then €.
    pub points: Vec<FrontPoint>,
    pub bounds: Option<NormBounds>,
    pub normalized_points: Vec<[f64; 2]>,
}

impl ParetoFront {
    pub fn costs(&self) -> Vec<[f64; 2]> {
        self.points.iter().map(FrontPoint::costs).collect()
    }

    /// Area under this front using externally supplied bounds.
    pub fn area(&self, bounds: &NormBounds) -> f64 {
        area_under_front(&self.costs(), bounds)
    }
}

/// Keeps the non-dominated candidates, ordered independently of input order.
pub fn build_front(candidates: Vec<FrontPoint>) -> ParetoFront {
    let costs: Vec<[f64; 2]> = candidates.iter().map(FrontPoint::costs).collect();
    let mut points: Vec<FrontPoint> = candidates
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !costs.iter().any(|c| dominates(c, &costs[*i])))
        .map(|(_, p)| p)
        .collect();
    points.sort_by(|a, b| {
        a.health_mean
            .total_cmp(&b.health_mean)
            .then(a.eco_mean.total_cmp(&b.eco_mean))
            .then_with(|| a.policy_ref.cmp(&b.policy_ref))
            .then(a.beta.unwrap_or(-1.0).total_cmp(&b.beta.unwrap_or(-1.0)))
    });
    let bounds = NormBounds::from_points(points.iter().map(FrontPoint::costs).collect::<Vec<_>>().iter());
    let normalized_points = match &bounds {
        Some(b) => points.iter().map(|p| b.normalize(p.costs())).collect(),
        None => Vec::new(),
    };
    ParetoFront {
        points,
        bounds,
        normalized_points,
    }
}

/// Staircase area above the normalized front inside the unit square.
///
/// Points are sorted by normalized deaths; the curve starts at y = 1 from x = 0
/// to the first point, holds each point's y until the next x, and ends at x = 1.
/// Dominated inputs are harmless; an empty front scores 1.
pub fn area_under_front(points: &[[f64; 2]], bounds: &NormBounds) -> f64 {
    let mut norm: Vec<[f64; 2]> = points.iter().map(|&p| bounds.normalize(p)).collect();
    if norm.is_empty() {
        return 1.0;
    }
    norm.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    // Dominated points never lower the envelope: y is the running minimum.
    let mut area = norm[0][0];
    let mut y = norm[0][1];
    for w in norm.windows(2) {
        y = y.min(w[0][1]);
        area += (w[1][0] - w[0][0]) * y;
    }
    let last = norm[norm.len() - 1];
    area + (1.0 - last[0]) * y.min(last[1])
}
