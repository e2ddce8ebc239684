//! The (accuracy, SPD) feasibility octagon for a labelled dataset, baseline
//! reference points, containment tests, and Pareto-front extraction.
//!
//! Every classifier over a fixed labelled dataset lands inside a convex
//! octagon in the (accuracy, SPD) plane. The vertices are single exact
//! integer ratios, so each one is attained bitwise by a concrete labeling;
//! [`brute_force_hull`] enumerates all labelings of small datasets and serves
//! as the independent oracle for the vertex formulas.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, GroupView};
use crate::metrics::{spd_from_rates, Rate};

#[derive(Debug, Error)]
pub enum OctagonError {
    #[error("group {0:?} has no rows")]
    EmptyGroup(&'static str),
    #[error("dataset has no label column")]
    NoLabel,
    #[error("{n} rows exceed the enumeration bound of {bound}")]
    TooLargeToEnumerate { n: usize, bound: usize },
}

/// Positive/negative tallies per group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub pos_priv: u64,
    pub neg_priv: u64,
    pub pos_unpriv: u64,
    pub neg_unpriv: u64,
}

impl DatasetStats {
    pub fn n(&self) -> u64 {
        self.pos_priv + self.neg_priv + self.pos_unpriv + self.neg_unpriv
    }

    pub fn n_priv(&self) -> u64 {
        self.pos_priv + self.neg_priv
    }

    pub fn n_unpriv(&self) -> u64 {
        self.pos_unpriv + self.neg_unpriv
    }

    pub fn n_pos(&self) -> u64 {
        self.pos_priv + self.pos_unpriv
    }

    pub fn n_neg(&self) -> u64 {
        self.neg_priv + self.neg_unpriv
    }

    /// SPD of the true labels.
    pub fn spd(&self) -> f64 {
        spd_from_rates(
            Rate {
                count: self.pos_priv,
                total: self.n_priv(),
            },
            Rate {
                count: self.pos_unpriv,
                total: self.n_unpriv(),
            },
        )
    }
}

/// Exact group/class tallies for a labelled dataset under a group view.
pub fn dataset_stats(d: &Dataset, g: &GroupView) -> Result<DatasetStats, OctagonError> {
    let label = d.label().ok_or(OctagonError::NoLabel)?;
    let fav = g.favourable_code();
    let mut s = DatasetStats {
        pos_priv: 0,
        neg_priv: 0,
        pos_unpriv: 0,
        neg_unpriv: 0,
    };
    for r in 0..d.n_rows() {
        let positive = label.code(r).expect("label fully observed") == fav;
        match (g.is_privileged(r), positive) {
            (true, true) => s.pos_priv += 1,
            (true, false) => s.neg_priv += 1,
            (false, true) => s.pos_unpriv += 1,
            (false, false) => s.neg_unpriv += 1,
        }
    }
    if s.n_priv() == 0 {
        return Err(OctagonError::EmptyGroup("privileged"));
    }
    if s.n_unpriv() == 0 {
        return Err(OctagonError::EmptyGroup("unprivileged"));
    }
    Ok(s)
}

/// A labelled point in the (accuracy, SPD) plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub label: String,
    pub accuracy: f64,
    pub spd: f64,
}

impl TradeoffPoint {
    pub fn new(label: impl Into<String>, accuracy: f64, spd: f64) -> Self {
        TradeoffPoint {
            label: label.into(),
            accuracy,
            spd,
        }
    }
}

/// The eight (accuracy, SPD) vertices bounding all classifiers, starting
/// from the perfect classifier and proceeding counter-clockwise in the
/// (SPD, accuracy) plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OctagonSpec {
    pub vertices: [(f64, f64); 8],
    /// Whether the majority class is the favourable class.
    pub assumption_satisfied: bool,
    /// Set when two or more vertices coincide (e.g. single-class data).
    pub degenerate: bool,
}

/// Vertices of the feasibility octagon.
///
/// The intermediate vertices depend on which group is smaller: the boundary
/// spends the smaller group's flips first because each one moves SPD by the
/// larger step. The two branches are mirror images under the group-swap sign
/// identity.
pub fn octagon_vertices(s: &DatasetStats) -> Result<OctagonSpec, OctagonError> {
    if s.n_priv() == 0 {
        return Err(OctagonError::EmptyGroup("privileged"));
    }
    if s.n_unpriv() == 0 {
        return Err(OctagonError::EmptyGroup("unprivileged"));
    }
    let (pa, na, pb, nb) = (
        s.pos_priv as f64,
        s.neg_priv as f64,
        s.pos_unpriv as f64,
        s.neg_unpriv as f64,
    );
    let n_a = s.n_priv() as f64;
    let n_b = s.n_unpriv() as f64;
    let n = s.n() as f64;
    let spd_true = s.spd();

    let v1 = (1.0, spd_true);
    let v3 = ((na + pb) / n, -1.0);
    let v5 = (0.0, -spd_true);
    let v7 = ((pa + nb) / n, 1.0);

    let (v2, v4, v6, v8) = if s.n_priv() <= s.n_unpriv() {
        (
            ((n - pa) / n, -(pb / n_b)),
            (na / n, -(nb / n_b)),
            (pa / n, pb / n_b),
            ((n - na) / n, nb / n_b),
        )
    } else {
        (
            ((n - nb) / n, -(na / n_a)),
            (pb / n, -(pa / n_a)),
            (nb / n, na / n_a),
            ((n - pb) / n, pa / n_a),
        )
    };

    let vertices = [v1, v2, v3, v4, v5, v6, v7, v8];
    let degenerate = (0..8).any(|i| vertices[i] == vertices[(i + 1) % 8]);
    debug_assert!(is_convex(&vertices), "octagon must be convex");
    Ok(OctagonSpec {
        vertices,
        assumption_satisfied: 2 * s.n_pos() >= s.n(),
        degenerate,
    })
}

// Vertices are stored as (accuracy, spd) but ordered counter-clockwise in the
// (spd, accuracy) plane, which is clockwise here; the interior therefore lies
// on the non-positive side of each directed edge.
fn cross(p: (f64, f64), q: (f64, f64), r: (f64, f64)) -> f64 {
    (q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0)
}

fn is_convex(vertices: &[(f64, f64); 8]) -> bool {
    (0..8).all(|i| {
        let p = vertices[i];
        let q = vertices[(i + 1) % 8];
        let r = vertices[(i + 2) % 8];
        cross(p, q, r) <= 1e-12
    })
}

/// Convex-polygon membership with an absolute tolerance per half-plane test.
pub fn contains(o: &OctagonSpec, p: &TradeoffPoint, tol: f64) -> bool {
    let pt = (p.accuracy, p.spd);
    (0..8).all(|i| {
        let a = o.vertices[i];
        let b = o.vertices[(i + 1) % 8];
        if a == b {
            return true; // zero-length edge of a degenerate polygon
        }
        cross(a, b, pt) <= tol
    })
}

/// All (accuracy, SPD) points achievable by some labeling of `d`'s rows,
/// deduplicated. Exponential in the row count; refuses beyond 20 rows.
pub fn brute_force_hull(d: &Dataset, g: &GroupView) -> Result<Vec<TradeoffPoint>, OctagonError> {
    const BOUND: usize = 20;
    let n = d.n_rows();
    if n > BOUND {
        return Err(OctagonError::TooLargeToEnumerate { n, bound: BOUND });
    }
    let label = d.label().ok_or(OctagonError::NoLabel)?;
    let fav = g.favourable_code();
    let rows: Vec<(bool, bool)> = (0..n)
        .map(|r| (g.is_privileged(r), label.code(r) == Some(fav)))
        .collect();
    let n_priv = rows.iter().filter(|&&(p, _)| p).count() as u64;
    let n_unpriv = n as u64 - n_priv;
    if n_priv == 0 {
        return Err(OctagonError::EmptyGroup("privileged"));
    }
    if n_unpriv == 0 {
        return Err(OctagonError::EmptyGroup("unprivileged"));
    }

    let mut seen = std::collections::BTreeSet::new();
    let mut points = Vec::new();
    for mask in 0u32..(1u32 << n) {
        let mut pos_priv = 0u64;
        let mut pos_unpriv = 0u64;
        let mut correct = 0u64;
        for (i, &(privileged, positive)) in rows.iter().enumerate() {
            let predicted_positive = mask & (1 << i) != 0;
            if predicted_positive {
                if privileged {
                    pos_priv += 1;
                } else {
                    pos_unpriv += 1;
                }
            }
            if predicted_positive == positive {
                correct += 1;
            }
        }
        let accuracy = correct as f64 / n as f64;
        let spd = spd_from_rates(
            Rate {
                count: pos_priv,
                total: n_priv,
            },
            Rate {
                count: pos_unpriv,
                total: n_unpriv,
            },
        );
        if seen.insert((accuracy.to_bits(), spd.to_bits())) {
            points.push(TradeoffPoint::new("", accuracy, spd));
        }
    }
    Ok(points)
}

/// The majority-class and perfect-classifier reference points.
pub fn baseline_points(s: &DatasetStats) -> (TradeoffPoint, TradeoffPoint) {
    let majority_fraction = s.n_pos().max(s.n_neg()) as f64 / s.n() as f64;
    (
        TradeoffPoint::new("majority", majority_fraction, 0.0),
        TradeoffPoint::new("perfect", 1.0, s.spd()),
    )
}

/// `p` dominates `q` under (maximise accuracy, minimise |SPD|).
fn dominates(p: &TradeoffPoint, q: &TradeoffPoint) -> bool {
    let better_acc = p.accuracy >= q.accuracy;
    let better_spd = p.spd.abs() <= q.spd.abs();
    better_acc && better_spd && (p.accuracy > q.accuracy || p.spd.abs() < q.spd.abs())
}

/// Points not dominated under (maximise accuracy, minimise |SPD|); ties and
/// duplicates are kept. Output sorted by ascending accuracy.
pub fn pareto_front(points: &[TradeoffPoint]) -> Vec<TradeoffPoint> {
    let mut front: Vec<TradeoffPoint> = points
        .iter()
        .filter(|p| !points.iter().any(|q| dominates(q, p)))
        .cloned()
        .collect();
    front.sort_by(|a, b| a.accuracy.total_cmp(&b.accuracy));
    front
}
