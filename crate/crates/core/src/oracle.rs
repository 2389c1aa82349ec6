//! Exhaustive reference solver for small grids.
//!
//! Enumerates every strictly decreasing timestep sequence and prices it with
//! arithmetic written independently of [`crate::planner`], so the two can be
//! checked against each other.

use std::cmp::Ordering;

use serde::Serialize;

use crate::dna::DnaProfile;
use crate::error::{Error, Result};
use crate::planner::Schedule;

/// Largest grid the enumerator accepts.
pub const MAX_GRID: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Denoising order, latest time first.
    pub best_sequence: Vec<f64>,
    pub best_cost: f64,
    pub enumerated_count: u64,
}

/// Schedule JSON plus the enumeration count.
#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    #[serde(flatten)]
    pub schedule: Schedule,
    pub enumerated_count: u64,
}

impl OracleResult {
    pub fn to_report(&self, dna: &DnaProfile) -> OracleReport {
        OracleReport {
            schedule: Schedule {
                steps: self.best_sequence.len() - 1,
                timesteps: self.best_sequence.clone(),
                total_cost: self.best_cost,
                gain: -self.best_cost,
                rho_curve: None,
                source: dna.meta().clone(),
            },
            enumerated_count: self.enumerated_count,
        }
    }
}

fn drift(t_from: f64, t_to: f64, c_from: f64) -> f64 {
    let frac = 1.0 - t_to / t_from;
    frac * frac * c_from
}

/// Cost of `indices` (grid indices, descending time) from first principles.
fn sequence_cost(times: &[f64], values: &[f64], indices: &[usize]) -> f64 {
    let first = indices[0];
    let last = indices[indices.len() - 1];
    let mut total = -values[first];
    for pair in indices.windows(2) {
        total += drift(times[pair[0]], times[pair[1]], values[pair[0]]);
    }
    total + values[last]
}

/// Recomputes the total path cost of a denoising-order sequence.
pub fn recompute_cost(dna: &DnaProfile, timesteps: &[f64]) -> Result<f64> {
    if timesteps.len() < 2 {
        return Err(Error::Domain("a schedule needs at least 2 timesteps".to_string()));
    }
    let times = dna.times();
    let mut indices = Vec::with_capacity(timesteps.len());
    for &t in timesteps {
        let i = times.iter().position(|&g| g == t).ok_or(Error::OffGrid(t))?;
        indices.push(i);
    }
    if let Some(w) = timesteps.windows(2).find(|w| w[0] <= w[1]) {
        return Err(Error::Ordering(format!("{} is not later than {}", w[0], w[1])));
    }
    if timesteps[0] <= 0.0 {
        return Err(Error::Domain("a jump cannot start at t = 0".to_string()));
    }
    Ok(sequence_cost(times, dna.values(), &indices))
}

/// Brute-force optimum over all admissible sequences, optionally with exactly
/// `k_steps` transitions. Ties resolve as in the planner: fewer steps, then the
/// lexicographically largest sequence.
pub fn enumerate_best(
    dna: &DnaProfile,
    k_steps: Option<usize>,
    pin_start: bool,
    pin_end: bool,
) -> Result<OracleResult> {
    let n = dna.len();
    if n > MAX_GRID {
        return Err(Error::GridTooLarge { len: n, limit: MAX_GRID });
    }
    if k_steps == Some(0) {
        return Err(Error::Domain("step budget must be at least 1".to_string()));
    }
    let times = dna.times();
    let values = dna.values();
    let eps = 1e-12 * values.iter().copied().fold(0.0, f64::max);

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut count = 0u64;
    let mut indices = Vec::with_capacity(n);
    for mask in 1u32..(1u32 << n) {
        let members = mask.count_ones() as usize;
        if members < 2 || k_steps.is_some_and(|k| members != k + 1) {
            continue;
        }
        indices.clear();
        indices.extend((0..n).rev().filter(|&i| mask & (1 << i) != 0));
        if pin_start && indices[0] != n - 1 {
            continue;
        }
        if pin_end && indices[indices.len() - 1] != 0 {
            continue;
        }
        if times[indices[0]] <= 0.0 {
            continue;
        }
        count += 1;
        let cost = sequence_cost(times, values, &indices);
        let better = match &best {
            None => true,
            Some((best_cost, best_idx)) => {
                if cost < best_cost - eps {
                    true
                } else if cost <= best_cost + eps {
                    match indices.len().cmp(&best_idx.len()) {
                        Ordering::Less => true,
                        Ordering::Greater => false,
                        // larger time first == larger grid index first
                        Ordering::Equal => indices.as_slice() > best_idx.as_slice(),
                    }
                } else {
                    false
                }
            }
        };
        if better {
            best = Some((cost, indices.clone()));
        }
    }

    let (best_cost, best_idx) = best.ok_or_else(|| {
        Error::Infeasible(match k_steps {
            Some(k) => format!("no admissible {k}-step sequence on a {n}-point grid"),
            None => format!("no admissible sequence on a {n}-point grid"),
        })
    })?;
    Ok(OracleResult {
        best_sequence: best_idx.iter().map(|&i| times[i]).collect(),
        best_cost,
        enumerated_count: count,
    })
}
