//! A linear-flow world where every quantity has a closed form.
//!
//! States follow `x_t* = (1 - t) x0 + t z`. The synthetic denoiser returns
//! `x0 + e(t) u` from the ideal state at time `t`, so the reconstruction
//! error profile is exactly `e(t)^2` and a first-order jump `t -> k` lands
//! `((t - k) / t) (x0_hat - x0)` away from `x_k*`.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dna::{lever, DnaProfile, TimeGrid};
use crate::error::{Error, Result};
use crate::fmt::sig17;

/// Piecewise-linear error magnitude `e(t)`, held constant outside its grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl ErrorTable {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.is_empty() || grid.len() != values.len() {
            return Err(Error::Parse(format!(
                "error table needs matching non-empty arrays, got {} and {}",
                grid.len(),
                values.len()
            )));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|t| !t.is_finite()) {
            return Err(Error::Parse("error table grid must strictly increase".to_string()));
        }
        if let Some(i) = values.iter().position(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::Parse(format!("error table value {i} must be finite and >= 0")));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` on `grid`.
    pub fn from_fn(grid: &TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid.points().to_vec(), grid.points().iter().map(|&t| f(t)).collect())
    }

    pub fn eval(&self, t: f64) -> f64 {
        let g = &self.grid;
        if t <= g[0] {
            return self.values[0];
        }
        if t >= g[g.len() - 1] {
            return self.values[g.len() - 1];
        }
        let hi = g.partition_point(|&p| p < t);
        if g[hi] == t {
            return self.values[hi];
        }
        let lo = hi - 1;
        let w = (t - g[lo]) / (g[hi] - g[lo]);
        self.values[lo] + w * (self.values[hi] - self.values[lo])
    }
}

/// Data point, noise draw, error direction and error schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioDocument", into = "ScenarioDocument")]
pub struct SimScenario {
    x0: Vec<f64>,
    z: Vec<f64>,
    u: Vec<f64>,
    e: ErrorTable,
}

#[derive(Serialize, Deserialize)]
struct ScenarioDocument {
    x0: Vec<f64>,
    z: Vec<f64>,
    u: Vec<f64>,
    e: ErrorTable,
}

impl TryFrom<ScenarioDocument> for SimScenario {
    type Error = Error;

    fn try_from(doc: ScenarioDocument) -> Result<Self> {
        let e = ErrorTable::new(doc.e.grid, doc.e.values)?;
        SimScenario::new(doc.x0, doc.z, doc.u, e)
    }
}

impl From<SimScenario> for ScenarioDocument {
    fn from(s: SimScenario) -> Self {
        ScenarioDocument { x0: s.x0, z: s.z, u: s.u, e: s.e }
    }
}

pub const DEFAULT_DIM: usize = 8;

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_time(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Domain(format!("timestep {t} outside [0, 1]")))
    }
}

fn check_jump(t: f64, k: f64) -> Result<()> {
    check_time(t)?;
    check_time(k)?;
    if t <= 0.0 || k > t {
        return Err(Error::Ordering(format!("need 0 <= k <= t and t > 0, got t = {t}, k = {k}")));
    }
    Ok(())
}

impl SimScenario {
    pub fn new(x0: Vec<f64>, z: Vec<f64>, u: Vec<f64>, e: ErrorTable) -> Result<Self> {
        let d = x0.len();
        if d == 0 {
            return Err(Error::Domain("scenario dimension must be positive".to_string()));
        }
        for v in [&z, &u] {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: v.len() });
            }
        }
        if [&x0, &z, &u].iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::Domain("scenario vectors must be finite".to_string()));
        }
        let un = norm_sq(&u).sqrt();
        if (un - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("error direction must have unit norm, got {un}")));
        }
        Ok(Self { x0, z, u, e })
    }

    /// Gaussian `x0` and `z`, a uniformly random unit `u`.
    pub fn random(dim: usize, e: ErrorTable, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
        let x0 = draw(dim);
        let z = draw(dim);
        let mut u = draw(dim);
        let norm = norm_sq(&u).sqrt();
        u.iter_mut().for_each(|x| *x /= norm);
        // renormalize once more so the unit-norm check holds to rounding
        let norm = norm_sq(&u).sqrt();
        u.iter_mut().for_each(|x| *x /= norm);
        Self::new(x0, z, u, e)
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn error_table(&self) -> &ErrorTable {
        &self.e
    }

    pub fn error_at(&self, t: f64) -> f64 {
        self.e.eval(t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn to_json(&self) -> Result<String> {
        crate::fmt::to_stable_json(self)
    }

    /// `x_t* = (1 - t) x0 + t z`.
    pub fn ideal_state(&self, t: f64) -> Result<Vec<f64>> {
        check_time(t)?;
        Ok(self.ideal_unchecked(t))
    }

    fn ideal_unchecked(&self, t: f64) -> Vec<f64> {
        self.x0.iter().zip(&self.z).map(|(a, b)| (1.0 - t) * a + t * b).collect()
    }

    /// Single-step clean estimate from the ideal state at `t`.
    pub fn clean_estimate(&self, t: f64) -> Result<Vec<f64>> {
        check_time(t)?;
        let e = self.e.eval(t);
        Ok(self.x0.iter().zip(&self.u).map(|(a, u)| a + e * u).collect())
    }

    /// `v_t = (x_t* - x0_hat) / t`.
    pub fn model_velocity(&self, t: f64) -> Result<Vec<f64>> {
        check_time(t)?;
        if t <= 0.0 {
            return Err(Error::Domain("velocity undefined at t = 0".to_string()));
        }
        let xt = self.ideal_unchecked(t);
        let x0_hat = self.clean_estimate(t)?;
        Ok(xt.iter().zip(&x0_hat).map(|(a, b)| (a - b) / t).collect())
    }

    /// One first-order step from the ideal state at `t` down to `k`.
    pub fn propagate(&self, t: f64, k: f64) -> Result<Vec<f64>> {
        check_jump(t, k)?;
        let xt = self.ideal_unchecked(t);
        let v = self.model_velocity(t)?;
        Ok(xt.iter().zip(&v).map(|(x, v)| x - (t - k) * v).collect())
    }

    /// `| ||x_k - x_k*||^2 - lever(t, k) * e(t)^2 |`.
    pub fn verify_lever_identity(&self, t: f64, k: f64) -> Result<f64> {
        let xk = self.propagate(t, k)?;
        let drift = dist_sq(&xk, &self.ideal_unchecked(k));
        let e = self.e.eval(t);
        Ok((drift - lever(t, k) * e * e).abs())
    }

    /// Measures `||x0_hat(x_t*, t) - x0||^2` at every grid point.
    pub fn extract_dna(&self, grid: &TimeGrid) -> Result<DnaProfile> {
        let mut values = Vec::with_capacity(grid.len());
        for &t in grid.points() {
            values.push(dist_sq(&self.clean_estimate(t)?, &self.x0));
        }
        let mut meta = Map::new();
        meta.insert("source".to_string(), Value::from("linear-flow simulation"));
        meta.insert("dim".to_string(), Value::from(self.dim()));
        DnaProfile::with_meta(grid.clone(), values, meta)
    }

    /// Executes first-order steps along `timesteps` (denoising order).
    ///
    /// With `correction` every step restarts from the ideal state at its
    /// source time; without it the realized state is carried forward and the
    /// model velocity of the ideal state is applied to it, so drift adds up.
    pub fn rollout(&self, timesteps: &[f64], correction: bool) -> Result<RolloutReport> {
        if timesteps.len() < 2 {
            return Err(Error::Domain("a rollout needs at least 2 timesteps".to_string()));
        }
        for w in timesteps.windows(2) {
            check_jump(w[0], w[1])?;
            if w[0] == w[1] {
                return Err(Error::Ordering("timesteps must strictly decrease".to_string()));
            }
        }
        let start = timesteps[0];
        let mut state = self.ideal_state(start)?;
        let mut states = vec![state.clone()];
        let mut drift_sq = vec![0.0];
        let mut err_sq = vec![dist_sq(&state, &self.x0)];
        for w in timesteps.windows(2) {
            let (t, k) = (w[0], w[1]);
            let next = if correction {
                self.propagate(t, k)?
            } else {
                let v = self.model_velocity(t)?;
                state.iter().zip(&v).map(|(x, v)| x - (t - k) * v).collect()
            };
            drift_sq.push(dist_sq(&next, &self.ideal_unchecked(k)));
            err_sq.push(dist_sq(&next, &self.x0));
            states.push(next.clone());
            state = next;
        }
        Ok(RolloutReport {
            timesteps: timesteps.to_vec(),
            correction,
            final_err_sq: err_sq[err_sq.len() - 1],
            states,
            drift_sq,
            err_sq,
        })
    }
}

/// Per-step record of a simulated rollout. Index 0 is the starting state.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutReport {
    pub timesteps: Vec<f64>,
    pub correction: bool,
    pub states: Vec<Vec<f64>>,
    pub drift_sq: Vec<f64>,
    pub err_sq: Vec<f64>,
    pub final_err_sq: f64,
}

impl RolloutReport {
    pub fn total_drift(&self) -> f64 {
        self.drift_sq.iter().sum()
    }

    /// `step,t,drift_sq,err_sq` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,t,drift_sq,err_sq")?;
        for (i, t) in self.timesteps.iter().enumerate() {
            writeln!(w, "{i},{},{},{}", sig17(*t), sig17(self.drift_sq[i]), sig17(self.err_sq[i]))?;
        }
        Ok(())
    }
}

/// Posterior-mean denoiser for Gaussian data `x0 ~ N(0, data_std^2 I)`.
///
/// Its reconstruction error has the closed form
/// `dim * s^2 t^2 / ((1 - t)^2 s^2 + t^2)`, which the Monte-Carlo estimator
/// approaches as the number of `(x0, z)` draws grows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianDenoiser {
    pub dim: usize,
    pub data_std: f64,
}

impl GaussianDenoiser {
    fn shrink(&self, t: f64) -> f64 {
        let s2 = self.data_std * self.data_std;
        (1.0 - t) * s2 / ((1.0 - t) * (1.0 - t) * s2 + t * t)
    }

    pub fn clean_estimate(&self, xt: &[f64], t: f64) -> Vec<f64> {
        let a = self.shrink(t);
        xt.iter().map(|x| a * x).collect()
    }

    pub fn analytic_error(&self, t: f64) -> f64 {
        let s2 = self.data_std * self.data_std;
        self.dim as f64 * s2 * t * t / ((1.0 - t) * (1.0 - t) * s2 + t * t)
    }

    pub fn analytic_dna(&self, grid: &TimeGrid) -> Result<DnaProfile> {
        DnaProfile::from_fn(grid.clone(), |t| self.analytic_error(t))
    }

    /// Sample mean of `||x0_hat - x0||^2` over `draws` pairs `(x0, z)`.
    pub fn monte_carlo_dna(&self, grid: &TimeGrid, draws: usize, seed: u64) -> Result<DnaProfile> {
        if draws == 0 {
            return Err(Error::Domain("at least one draw is required".to_string()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sums = vec![0.0; grid.len()];
        for _ in 0..draws {
            let x0: Vec<f64> = (0..self.dim).map(|_| self.data_std * rng.sample::<f64, _>(StandardNormal)).collect();
            let z: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
            for (sum, &t) in sums.iter_mut().zip(grid.points()) {
                let xt: Vec<f64> = x0.iter().zip(&z).map(|(a, b)| (1.0 - t) * a + t * b).collect();
                *sum += dist_sq(&self.clean_estimate(&xt, t), &x0);
            }
        }
        let mut meta = Map::new();
        meta.insert("source".to_string(), Value::from("gaussian posterior-mean monte carlo"));
        meta.insert("draws".to_string(), Value::from(draws));
        DnaProfile::with_meta(grid.clone(), sums.iter().map(|s| s / draws as f64).collect(), meta)
    }

    /// Drift identity residual for this (non rank-one) denoiser.
    pub fn lever_residual(&self, x0: &[f64], z: &[f64], t: f64, k: f64) -> Result<f64> {
        check_jump(t, k)?;
        let ideal = |s: f64| -> Vec<f64> { x0.iter().zip(z).map(|(a, b)| (1.0 - s) * a + s * b).collect() };
        let xt = ideal(t);
        let x0_hat = self.clean_estimate(&xt, t);
        let xk: Vec<f64> = xt
            .iter()
            .zip(&x0_hat)
            .map(|(x, h)| x - (t - k) * (x - h) / t)
            .collect();
        Ok((dist_sq(&xk, &ideal(k)) - lever(t, k) * dist_sq(&x0_hat, x0)).abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(e: f64) -> SimScenario {
        let table = ErrorTable::new(vec![0.0, 1.0], vec![e, e]).unwrap();
        SimScenario::new(vec![0.0], vec![2.0], vec![1.0], table).unwrap()
    }

    #[test]
    fn ideal_state_endpoints() {
        let s = SimScenario::random(4, ErrorTable::new(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap(), 3).unwrap();
        assert_eq!(s.ideal_state(0.0).unwrap(), s.x0);
        assert_eq!(s.ideal_state(1.0).unwrap(), s.z);
        assert_eq!(scalar(0.0).ideal_state(0.5).unwrap(), vec![1.0]);
        assert!(s.ideal_state(1.5).is_err());
    }

    #[test]
    fn velocity_examples() {
        assert_eq!(scalar(0.0).model_velocity(0.3).unwrap(), vec![2.0]);
        let v = scalar(0.1).model_velocity(0.5).unwrap();
        assert!((v[0] - 1.8).abs() < 1e-15);
        assert!(scalar(0.1).model_velocity(0.0).is_err());

        let s = SimScenario::random(5, ErrorTable::new(vec![0.0, 1.0], vec![0.2, 0.9]).unwrap(), 7).unwrap();
        let t = 0.37;
        let v = s.model_velocity(t).unwrap();
        let e = s.error_at(t);
        for (i, vi) in v.iter().enumerate() {
            let v_star = s.z[i] - s.x0[i];
            assert!((t * (v_star - vi) - e * s.u[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn propagate_examples() {
        let s = scalar(0.1);
        assert_eq!(s.propagate(0.5, 0.5).unwrap(), s.ideal_state(0.5).unwrap());
        let x = s.propagate(0.5, 0.25).unwrap();
        assert!((x[0] - 0.55).abs() < 1e-15);
        assert!(s.propagate(0.25, 0.5).is_err());

        let perfect = SimScenario::random(6, ErrorTable::new(vec![0.0, 1.0], vec![0.0, 0.0]).unwrap(), 1).unwrap();
        let xk = perfect.propagate(0.9, 0.2).unwrap();
        let ideal = perfect.ideal_state(0.2).unwrap();
        assert!(dist_sq(&xk, &ideal) < 1e-28);
    }

    #[test]
    fn lever_identity_special_cases() {
        let s = SimScenario::random(8, ErrorTable::new(vec![0.0, 1.0], vec![0.3, 1.7]).unwrap(), 11).unwrap();
        let xk = s.propagate(1.0, 0.0).unwrap();
        assert!((dist_sq(&xk, &s.x0) - 1.7 * 1.7).abs() < 1e-12);
        assert!(s.verify_lever_identity(0.8, 0.3).unwrap() < 1e-12);
        let perfect = scalar(0.0);
        assert!(perfect.verify_lever_identity(0.8, 0.3).unwrap() < 1e-30);
    }

    #[test]
    fn extraction() {
        let grid = TimeGrid::uniform(11).unwrap();
        let zero = SimScenario::random(3, ErrorTable::from_fn(&grid, |_| 0.0).unwrap(), 0).unwrap();
        assert!(zero.extract_dna(&grid).unwrap().values().iter().all(|&v| v == 0.0));

        let linear = SimScenario::random(3, ErrorTable::from_fn(&grid, |t| t).unwrap(), 0).unwrap();
        let dna = linear.extract_dna(&grid).unwrap();
        for (t, c) in dna.times().iter().zip(dna.values()) {
            assert!((c - t * t).abs() < 1e-14);
        }
        let back = DnaProfile::from_json(&dna.to_json().unwrap()).unwrap();
        assert_eq!(back, dna);
    }

    #[test]
    fn interpolation_between_nodes() {
        let table = ErrorTable::new(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 3.0]).unwrap();
        assert_eq!(table.eval(0.25), 0.5);
        assert_eq!(table.eval(0.75), 2.0);
        assert_eq!(table.eval(1.0), 3.0);
        assert!(ErrorTable::new(vec![0.0, 1.0], vec![0.0, -1.0]).is_err());
    }

    #[test]
    fn rollout_examples() {
        let grid = TimeGrid::uniform(11).unwrap();
        let e = ErrorTable::from_fn(&grid, |t| 0.5 + t).unwrap();
        let s = SimScenario::random(8, e, 5).unwrap();
        let r = s.rollout(&[1.0, 0.0], true).unwrap();
        assert!((r.final_err_sq - 1.5 * 1.5).abs() < 1e-12);

        let zero = SimScenario::random(8, ErrorTable::from_fn(&grid, |_| 0.0).unwrap(), 5).unwrap();
        let r = zero.rollout(&[1.0, 0.6, 0.2, 0.0], true).unwrap();
        assert!(r.total_drift() < 1e-28);
        assert!(r.final_err_sq < 1e-28);

        let sched = [1.0, 0.7, 0.4, 0.1, 0.0];
        let on = s.rollout(&sched, true).unwrap();
        let off = s.rollout(&sched, false).unwrap();
        assert!(off.drift_sq.last().unwrap() > on.drift_sq.last().unwrap());
        let mut csv = Vec::new();
        on.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("step,t,drift_sq,err_sq\n0,1.0000000000000000,"));
        assert_eq!(text.lines().count(), 6);
    }

    #[test]
    fn scenario_json_validates() {
        let s = SimScenario::random(3, ErrorTable::new(vec![0.0, 1.0], vec![0.1, 0.2]).unwrap(), 2).unwrap();
        let back: SimScenario = serde_json::from_str(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
        let bad = r#"{"x0":[0,0],"z":[1,1],"u":[1,1],"e":{"grid":[0,1],"values":[0,0]}}"#;
        assert!(serde_json::from_str::<SimScenario>(bad).is_err());
    }

    #[test]
    fn gaussian_denoiser_monte_carlo_matches_closed_form() {
        let den = GaussianDenoiser { dim: 4, data_std: 0.7 };
        let grid = TimeGrid::uniform(6).unwrap();
        let exact = den.analytic_dna(&grid).unwrap();
        let mc = den.monte_carlo_dna(&grid, 20_000, 9).unwrap();
        for (a, b) in exact.values().iter().zip(mc.values()) {
            assert!((a - b).abs() <= 0.05 * a.max(1e-12), "{a} vs {b}");
        }
        assert_eq!(exact.values()[0], 0.0);
        assert!((exact.values()[5] - 4.0 * 0.49).abs() < 1e-12);
    }

    #[test]
    fn gaussian_denoiser_obeys_lever_identity() {
        let den = GaussianDenoiser { dim: 3, data_std: 1.3 };
        let x0 = [0.4, -1.1, 2.0];
        let z = [0.3, 0.8, -0.5];
        for &(t, k) in &[(1.0, 0.0), (0.9, 0.45), (0.3, 0.29), (0.5, 0.0)] {
            assert!(den.lever_residual(&x0, &z, t, k).unwrap() < 1e-12);
        }
    }
}
