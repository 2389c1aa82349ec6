//! Step-wise gain analysis and stability labels for a profile.
//!
//! The gain of the step from `t_hi` down to `t_lo` is `C(t_hi) - C(t_lo)`:
//! positive when moving toward `t = 0` lowers the reconstruction error.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dna::{DnaProfile, TimeGrid};
use crate::error::{Error, Result};
use crate::fmt::sig17;

/// First differences of a profile in denoising order; `gains[0]` is the step
/// that leaves the latest grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSeries {
    pub grid: TimeGrid,
    pub gains: Vec<f64>,
}

impl GainSeries {
    /// `(t_hi, t_lo)` of step `j`.
    pub fn interval(&self, j: usize) -> (f64, f64) {
        let p = self.grid.points();
        let hi = p.len() - 1 - j;
        (p[hi], p[hi - 1])
    }

    pub fn t_mid(&self, j: usize) -> f64 {
        let (hi, lo) = self.interval(j);
        0.5 * (hi + lo)
    }

    /// `t_mid,gain` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t_mid,gain")?;
        for (j, g) in self.gains.iter().enumerate() {
            writeln!(w, "{},{}", sig17(self.t_mid(j)), sig17(*g))?;
        }
        Ok(())
    }
}

pub fn stepwise_gain(dna: &DnaProfile) -> Result<GainSeries> {
    let n = dna.len();
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 grid points, got {n}")));
    }
    let v = dna.values();
    let gains = (1..n).rev().map(|hi| v[hi] - v[hi - 1]).collect();
    Ok(GainSeries { grid: dna.grid().clone(), gains })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilityLabel {
    MonotoneStable,
    LateOscillatory,
    InitialRegressive,
    NonConvergent,
}

/// Classification thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Normalized first-gain level below which the start is regressive.
    pub tau_neg: f64,
    /// Steps with midpoint below this time form the late window.
    pub t_late: f64,
    /// Sign changes in the late window that count as oscillation.
    pub n_osc: usize,
    /// Late/early mean-gain ratio above which the tail never converges.
    pub kappa: f64,
    /// Slack for the non-increasing check, relative to `max |gain|`.
    pub monotone_tol: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { tau_neg: 0.01, t_late: 0.4, n_osc: 3, kappa: 0.5, monotone_tol: 1e-9 }
    }
}

/// Which of the individual regime tests fired.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signals {
    pub initial_regressive: bool,
    pub non_convergent: bool,
    pub late_oscillatory: bool,
    pub monotone_stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub label: StabilityLabel,
    /// `(t_lo, t_hi)` spans of maximal negative-gain runs.
    pub negative_gain_regions: Vec<(f64, f64)>,
    pub suggested_start: f64,
    pub suggested_stop: f64,
    pub signals: Signals,
    pub late_early_ratio: Option<f64>,
    pub thresholds: Thresholds,
    /// `kappa` is a stand-in: "persistently high" gain has no agreed number.
    pub kappa_is_heuristic: bool,
}

impl StabilityReport {
    pub fn to_json(&self) -> Result<String> {
        crate::fmt::to_stable_json(self)
    }
}

/// Labels the gain series. Priority: initial-regressive, non-convergent,
/// late-oscillatory, monotone-stable. A series matching none of them is
/// reported as late-oscillatory if it has any negative gain and
/// monotone-stable otherwise.
pub fn classify(series: &GainSeries, cfg: &Thresholds) -> StabilityReport {
    let g = &series.gains;
    let scale = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let norm: Vec<f64> = if scale > 0.0 { g.iter().map(|x| x / scale).collect() } else { vec![0.0; g.len()] };

    let initial_regressive = norm.first().is_some_and(|&x| x < -cfg.tau_neg);

    let (mut late, mut early) = (Vec::new(), Vec::new());
    for (j, &x) in norm.iter().enumerate() {
        if series.t_mid(j) < cfg.t_late {
            late.push(x);
        } else {
            early.push(x);
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { None } else { Some(v.iter().sum::<f64>() / v.len() as f64) };
    let late_early_ratio = match (mean(&late), mean(&early)) {
        (Some(l), Some(e)) if e > 0.0 => Some(l / e),
        _ => None,
    };
    let non_convergent = late_early_ratio.is_some_and(|r| r > cfg.kappa);

    let signs: Vec<f64> = late.iter().copied().filter(|&x| x != 0.0).collect();
    let sign_changes = signs.windows(2).filter(|w| (w[0] > 0.0) != (w[1] > 0.0)).count();
    let late_oscillatory = sign_changes >= cfg.n_osc;

    let monotone_stable =
        norm.iter().all(|&x| x > 0.0) && norm.windows(2).all(|w| w[1] <= w[0] + cfg.monotone_tol);

    let signals = Signals { initial_regressive, non_convergent, late_oscillatory, monotone_stable };
    let label = if initial_regressive {
        StabilityLabel::InitialRegressive
    } else if non_convergent {
        StabilityLabel::NonConvergent
    } else if late_oscillatory {
        StabilityLabel::LateOscillatory
    } else if monotone_stable || g.iter().all(|&x| x >= 0.0) {
        StabilityLabel::MonotoneStable
    } else {
        StabilityLabel::LateOscillatory
    };

    let mut regions = Vec::new();
    let mut j = 0;
    while j < g.len() {
        if g[j] < 0.0 {
            let run_start = j;
            while j < g.len() && g[j] < 0.0 {
                j += 1;
            }
            let (hi, _) = series.interval(run_start);
            let (_, lo) = series.interval(j - 1);
            regions.push((lo, hi));
        } else {
            j += 1;
        }
    }

    let leading = g.iter().take_while(|&&x| x < 0.0).count();
    let points = series.grid.points();
    let last = points.len() - 1;
    // a fully regressive series keeps the latest point
    let suggested_start = if leading < g.len() { points[last - leading] } else { points[last] };
    let suggested_stop = if non_convergent {
        points
            .iter()
            .copied()
            .find(|&t| t >= cfg.t_late)
            .unwrap_or(points[0])
            .min(suggested_start)
    } else {
        points[0]
    };

    StabilityReport {
        label,
        negative_gain_regions: regions,
        suggested_start,
        suggested_stop,
        signals,
        late_early_ratio,
        thresholds: *cfg,
        kappa_is_heuristic: true,
    }
}

/// Synthetic profiles with the three textbook gain signatures.
pub mod archetypes {
    use super::*;

    /// `C(t) = e^{3t} - 1`: positive gain that decays toward `t = 0`.
    pub fn monotone_decay(n: usize) -> Result<DnaProfile> {
        DnaProfile::from_fn(TimeGrid::uniform(n)?, |t| (3.0 * t).exp() - 1.0)
    }

    /// As [`monotone_decay`] but with the error at the noise boundary pulled
    /// below its neighbour, so the very first step increases the error.
    pub fn initial_dip(n: usize) -> Result<DnaProfile> {
        let base = monotone_decay(n)?;
        let mut values = base.values().to_vec();
        values[n - 1] = 0.9 * values[n - 2];
        DnaProfile::new(base.grid().clone(), values)
    }

    /// Integrates a constant gain: `C(t) = t`, so late steps keep paying off as
    /// much as early ones.
    pub fn flat_gain(n: usize) -> Result<DnaProfile> {
        DnaProfile::from_fn(TimeGrid::uniform(n)?, |t| t)
    }
}
