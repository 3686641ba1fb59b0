//! Channel NMSE, Hungarian-matched parameter errors and failure detection.

use crate::estimate::EstimateResult;
use crate::manifold::PathParam;
use crate::{CMat, Error, Result};

/// Angle tolerance of the failure rule (degrees).
pub const ANGLE_TOLERANCE_DEG: f64 = 15.0;
/// Relative range tolerance of the failure rule.
pub const RANGE_TOLERANCE: f64 = 0.6;
/// Reported dB value for an exact reconstruction.
pub const NMSE_FLOOR_DB: f64 = -200.0;

/// `‖Ĥ − H‖²_F / ‖H‖²_F`.
pub fn channel_nmse(estimate: &CMat, truth: &CMat) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::DimensionMismatch(format!(
            "estimate is {:?}, truth is {:?}",
            estimate.shape(),
            truth.shape()
        )));
    }
    let denom = truth.norm_squared();
    if denom == 0.0 {
        return Err(Error::ZeroChannel);
    }
    Ok((estimate - truth).norm_squared() / denom)
}

/// `10 log10(x)` floored at [`NMSE_FLOOR_DB`].
pub fn nmse_db(linear: f64) -> f64 {
    if linear <= 0.0 {
        return NMSE_FLOOR_DB;
    }
    (10.0 * linear.log10()).max(NMSE_FLOOR_DB)
}

/// Minimum-cost perfect assignment on a square cost matrix.
///
/// Returns `assignment[row] = column`. Shortest augmenting path with
/// potentials, `O(n³)`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    assert!(cost.iter().all(|r| r.len() == n), "cost matrix must be square");
    // 1-based internally; column 0 is a virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = cost[r0 - 1][col - 1] - u[r0] - v[col];
                if reduced < min_to[col] {
                    min_to[col] = reduced;
                    way[col] = col0;
                }
                if min_to[col] < delta {
                    delta = min_to[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    min_to[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for col in 1..=n {
        assignment[owner[col] - 1] = col - 1;
    }
    assignment
}

pub fn assignment_cost(cost: &[Vec<f64>], assignment: &[usize]) -> f64 {
    assignment.iter().enumerate().map(|(i, &j)| cost[i][j]).sum()
}

/// Errors of one matched path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathError {
    /// `θ̂ − θ` in degrees.
    pub theta_deg: f64,
    /// `r̂ − r` in metres.
    pub range_m: f64,
    /// `|r̂ − r| / r`.
    pub relative_range: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// `assignment[i]` is the truth index matched to estimate `i`.
    pub assignment: Vec<usize>,
    /// Per-estimate errors in estimate order.
    pub errors: Vec<PathError>,
    pub cost: f64,
}

fn match_cost(est: (f64, f64), truth: (f64, f64)) -> f64 {
    (est.0 - truth.0).to_degrees().abs() / ANGLE_TOLERANCE_DEG
        + (est.1 - truth.1).abs() / (truth.1 * RANGE_TOLERANCE)
}

/// Hungarian matching of `(θ̂, r̂)` to `(θ, r)` (radians, metres) under the
/// tolerance-normalised cost `|Δθ|/15° + |Δr|/(0.6 r)`.
pub fn match_paths(est: &[(f64, f64)], truth: &[(f64, f64)]) -> Result<Matching> {
    if est.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} estimated paths vs {} true paths",
            est.len(),
            truth.len()
        )));
    }
    let cost: Vec<Vec<f64>> = est
        .iter()
        .map(|&e| truth.iter().map(|&t| match_cost(e, t)).collect())
        .collect();
    let assignment = hungarian(&cost);
    let errors = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let (e, t) = (est[i], truth[j]);
            PathError {
                theta_deg: (e.0 - t.0).to_degrees(),
                range_m: e.1 - t.1,
                relative_range: (e.1 - t.1).abs() / t.1,
            }
        })
        .collect();
    Ok(Matching {
        cost: assignment_cost(&cost, &assignment),
        assignment,
        errors,
    })
}

/// True iff any matched path exceeds either tolerance.
pub fn is_failure(errors: &[PathError]) -> bool {
    errors
        .iter()
        .any(|e| e.theta_deg.abs() > ANGLE_TOLERANCE_DEG || e.relative_range > RANGE_TOLERANCE)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialMetrics {
    pub nmse: f64,
    pub nmse_db: f64,
    /// Root mean square over this trial's matched paths.
    pub rmse_theta_deg: f64,
    pub rmse_range_m: f64,
    pub failed: bool,
    pub matching: Matching,
}

/// Scores an estimate against the true paths and noise-free channel.
pub fn evaluate(est: &EstimateResult, truth: &[PathParam], channel: &CMat) -> Result<TrialMetrics> {
    let nmse = channel_nmse(&est.channel, channel)?;
    let e: Vec<(f64, f64)> = est.paths.iter().map(|p| (p.theta, p.range)).collect();
    let t: Vec<(f64, f64)> = truth.iter().map(|p| (p.theta, p.range)).collect();
    let matching = match_paths(&e, &t)?;
    let mut pool = RmsePool::default();
    pool.add(&matching.errors);
    Ok(TrialMetrics {
        nmse,
        nmse_db: nmse_db(nmse),
        rmse_theta_deg: pool.rmse_theta_deg(),
        rmse_range_m: pool.rmse_range_m(),
        failed: is_failure(&matching.errors),
        matching,
    })
}

/// Squared errors pooled over paths and trials.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RmsePool {
    pub sum_sq_theta: f64,
    pub sum_sq_range: f64,
    pub count: usize,
}

impl RmsePool {
    pub fn add(&mut self, errors: &[PathError]) {
        for e in errors {
            self.sum_sq_theta += e.theta_deg * e.theta_deg;
            self.sum_sq_range += e.range_m * e.range_m;
            self.count += 1;
        }
    }

    pub fn merge(&mut self, other: &RmsePool) {
        self.sum_sq_theta += other.sum_sq_theta;
        self.sum_sq_range += other.sum_sq_range;
        self.count += other.count;
    }

    pub fn rmse_theta_deg(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        (self.sum_sq_theta / self.count as f64).sqrt()
    }

    pub fn rmse_range_m(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        (self.sum_sq_range / self.count as f64).sqrt()
    }
}
