//! Minimum-cost sampling schedules on the super-node DAG.
//!
//! Nodes are grid timesteps. A super-source `S` attaches to every node where
//! denoising may stop (weight `C(k)`, the terminal risk), a super-end `E` to
//! every node where it may start (weight `-C(t)`, the credit for the error
//! that is still correctable), and each pair `k < t` carries the transition
//! weight `W(t, k) = lever(t, k) * C(t)`. Edges run from low to high time, so
//! an `S -> E` path read backwards is a schedule in denoising order.
//!
//! Credit edges are negative, so every solver here is a dynamic program over
//! the topological (time) order.
//!
//! Ties between plans whose costs agree to within `1e-12 * max C` resolve to
//! fewer steps first, then to the lexicographically largest timestep sequence.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dna::{lever, DnaProfile};
use crate::error::{Error, Result};

const TIE_RELATIVE: f64 = 1e-12;

/// The planning graph derived from a profile.
#[derive(Debug, Clone)]
pub struct PlannerGraph {
    dna: DnaProfile,
    pin_start: bool,
    pin_end: bool,
    /// Active grid indices, ascending.
    nodes: Vec<usize>,
    source_weights: Vec<f64>,
    credit_weights: Vec<f64>,
}

/// Builds the graph over every grid point of `dna`.
///
/// With `pin_start` only the latest grid point may begin a schedule; with
/// `pin_end` only the earliest may end one.
pub fn build_graph(dna: &DnaProfile, pin_start: bool, pin_end: bool) -> Result<PlannerGraph> {
    let report = crate::dna::validate(dna.times(), dna.values());
    if !report.is_valid() {
        return Err(Error::InvalidProfile(report));
    }
    let source_weights = dna.values().to_vec();
    let credit_weights = source_weights.iter().map(|c| -c).collect();
    Ok(PlannerGraph {
        dna: dna.clone(),
        pin_start,
        pin_end,
        nodes: (0..dna.len()).collect(),
        source_weights,
        credit_weights,
    })
}

impl PlannerGraph {
    pub fn dna(&self) -> &DnaProfile {
        &self.dna
    }

    pub fn pin_start(&self) -> bool {
        self.pin_start
    }

    pub fn pin_end(&self) -> bool {
        self.pin_end
    }

    /// Active grid indices in ascending time order.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Terminal risk `C(t_i)` per grid index (weight of `S -> i`).
    pub fn source_weights(&self) -> &[f64] {
        &self.source_weights
    }

    /// Information credit `-C(t_i)` per grid index (weight of `i -> E`).
    pub fn credit_weights(&self) -> &[f64] {
        &self.credit_weights
    }

    fn is_active(&self, index: usize) -> bool {
        self.nodes.binary_search(&index).is_ok()
    }

    /// Whether a schedule may end at grid index `index`.
    pub fn has_stop_edge(&self, index: usize) -> bool {
        self.is_active(index) && (!self.pin_end || Some(&index) == self.nodes.first())
    }

    /// Whether a schedule may start at grid index `index`.
    pub fn has_start_edge(&self, index: usize) -> bool {
        self.is_active(index) && (!self.pin_start || Some(&index) == self.nodes.last())
    }

    pub fn stop_edge_count(&self) -> usize {
        self.nodes.iter().filter(|&&i| self.has_stop_edge(i)).count()
    }

    pub fn start_edge_count(&self) -> usize {
        self.nodes.iter().filter(|&&i| self.has_start_edge(i)).count()
    }

    /// Number of `lo -> hi` transition edges. A node at `t = 0` is never the
    /// later endpoint of a pair, so it never sources a jump.
    pub fn transition_edge_count(&self) -> usize {
        let times = self.dna.times();
        let mut count = 0;
        for (a, &hi) in self.nodes.iter().enumerate() {
            if times[hi] > 0.0 {
                count += a;
            }
        }
        count
    }

    /// Weight of the edge `lo -> hi`, i.e. the denoising jump `t_hi -> t_lo`.
    pub fn transition_weight(&self, lo: usize, hi: usize) -> Result<f64> {
        if !(self.is_active(lo) && self.is_active(hi)) {
            return Err(Error::Domain(format!("edge {lo} -> {hi} touches an inactive node")));
        }
        crate::dna::transition_cost(&self.dna, hi, lo)
    }

    /// Longest admissible chain, in transitions.
    pub fn max_steps(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    fn tie_eps(&self) -> f64 {
        let scale = self
            .nodes
            .iter()
            .map(|&i| self.source_weights[i])
            .fold(0.0, f64::max);
        TIE_RELATIVE * scale
    }

    /// Transition weights between active positions: `w[p][q]` for `q < p`.
    fn weight_table(&self) -> Vec<Vec<f64>> {
        let times = self.dna.times();
        self.nodes
            .iter()
            .enumerate()
            .map(|(p, &hi)| {
                self.nodes[..p]
                    .iter()
                    .map(|&lo| lever(times[hi], times[lo]) * self.source_weights[hi])
                    .collect()
            })
            .collect()
    }

    fn schedule_from_positions(&self, positions: &[usize]) -> Result<Schedule> {
        let times = self.dna.times();
        let timesteps: Vec<f64> = positions.iter().map(|&p| times[self.nodes[p]]).collect();
        Schedule::from_timesteps(self, timesteps)
    }
}

/// Restricts planning to the grid indices in `allowed` (intersected with the
/// currently active set). Pins refer to the extremes of the retained set.
pub fn restrict_nodes(graph: &PlannerGraph, allowed: &BTreeSet<usize>) -> Result<PlannerGraph> {
    let len = graph.dna.len();
    if let Some(&index) = allowed.iter().find(|&&i| i >= len) {
        return Err(Error::IndexOutOfRange { index, len });
    }
    let nodes: Vec<usize> = graph.nodes.iter().copied().filter(|i| allowed.contains(i)).collect();
    if nodes.len() < 2 {
        return Err(Error::Domain(format!(
            "node restriction keeps {} node(s); at least 2 are required",
            nodes.len()
        )));
    }
    Ok(PlannerGraph { nodes, ..graph.clone() })
}

/// A schedule in denoising order with its cost accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub timesteps: Vec<f64>,
    pub total_cost: f64,
    pub gain: f64,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_curve: Option<Vec<(usize, f64)>>,
    #[serde(default)]
    pub source: Map<String, Value>,
}

impl Schedule {
    /// Wraps an explicit timestep sequence, computing its cost and gain.
    pub fn from_timesteps(graph: &PlannerGraph, timesteps: Vec<f64>) -> Result<Self> {
        let (accumulated, start_value) = accumulate(graph, &timesteps)?;
        Ok(Schedule {
            steps: timesteps.len() - 1,
            timesteps,
            total_cost: accumulated - start_value,
            gain: start_value - accumulated,
            rho_curve: None,
            source: graph.dna.meta().clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        crate::fmt::to_stable_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Returns `(C(end) + sum W, C(start))` for a denoising-order sequence.
fn accumulate(graph: &PlannerGraph, timesteps: &[f64]) -> Result<(f64, f64)> {
    if timesteps.len() < 2 {
        return Err(Error::Domain(format!(
            "a schedule needs at least 2 timesteps, got {}",
            timesteps.len()
        )));
    }
    let grid = graph.dna.grid();
    let mut indices = Vec::with_capacity(timesteps.len());
    for &t in timesteps {
        indices.push(grid.index_of(t).ok_or(Error::OffGrid(t))?);
    }
    for pair in timesteps.windows(2) {
        if !(pair[0] > pair[1]) {
            return Err(Error::Ordering(format!(
                "timesteps must strictly decrease, found {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    let values = graph.dna.values();
    let mut acc = values[indices[indices.len() - 1]];
    for m in 0..timesteps.len() - 1 {
        acc += lever(timesteps[m], timesteps[m + 1]) * values[indices[m]];
    }
    Ok((acc, values[indices[0]]))
}

/// Total path cost `C(t_end) + sum W(t_m, t_{m+1}) - C(t_start)` of an
/// explicit denoising-order sequence.
pub fn path_cost(graph: &PlannerGraph, timesteps: &[f64]) -> Result<f64> {
    let (acc, start) = accumulate(graph, timesteps)?;
    Ok(acc - start)
}

#[derive(Debug, Clone, Copy)]
struct Label {
    cost: f64,
    steps: usize,
}

impl Label {
    const NONE: Label = Label { cost: f64::INFINITY, steps: usize::MAX };

    fn is_some(&self) -> bool {
        self.cost.is_finite()
    }

    fn beats(&self, other: &Label, eps: f64) -> bool {
        if !self.is_some() {
            return false;
        }
        if !other.is_some() {
            return true;
        }
        self.cost < other.cost - eps || (self.cost <= other.cost + eps && self.steps < other.steps)
    }
}

/// Best schedule with at least one transition and no step limit, found in a
/// single pass over the time order.
pub fn plan_unconstrained(graph: &PlannerGraph) -> Result<Schedule> {
    let m = graph.nodes.len();
    let w = graph.weight_table();
    let eps = graph.tie_eps();
    let c = |p: usize| graph.source_weights[graph.nodes[p]];

    // any[p]: best way to be at p coming up from S (possibly stopping at p);
    // moved[p]: same but with at least one transition.
    let mut any = vec![Label::NONE; m];
    let mut moved = vec![Label::NONE; m];
    for p in 0..m {
        for q in 0..p {
            if !any[q].is_some() {
                continue;
            }
            let cand = Label { cost: any[q].cost + w[p][q], steps: any[q].steps + 1 };
            if cand.beats(&moved[p], eps) {
                moved[p] = cand;
            }
        }
        any[p] = moved[p];
        if graph.has_stop_edge(graph.nodes[p]) {
            let stop = Label { cost: c(p), steps: 0 };
            if stop.beats(&any[p], eps) {
                any[p] = stop;
            }
        }
    }

    let mut best = Label::NONE;
    for (p, label) in moved.iter().enumerate() {
        if graph.has_start_edge(graph.nodes[p]) && label.is_some() {
            let total = Label { cost: label.cost - c(p), steps: label.steps };
            if total.beats(&best, eps) {
                best = total;
            }
        }
    }
    if !best.is_some() {
        return Err(Error::Infeasible("no admissible schedule with at least one step".to_string()));
    }
    let start = (0..m)
        .rev()
        .find(|&p| {
            graph.has_start_edge(graph.nodes[p])
                && moved[p].is_some()
                && moved[p].steps == best.steps
                && moved[p].cost - c(p) <= best.cost + eps
        })
        .expect("the optimum is attained at some start node");

    let mut positions = vec![start];
    let mut cur = start;
    let mut target = moved[start];
    while target.steps > 0 {
        let next = (0..cur)
            .rev()
            .find(|&q| {
                any[q].is_some()
                    && any[q].steps == target.steps - 1
                    && any[q].cost + w[cur][q] <= target.cost + eps
            })
            .expect("an optimal predecessor exists");
        positions.push(next);
        cur = next;
        target = any[next];
    }
    graph.schedule_from_positions(&positions)
}

/// Layered cost table: `dp[n][p]` is the cheapest way to reach active
/// position `p` from `S` with exactly `n` transitions.
struct Layers {
    dp: Vec<Vec<f64>>,
    w: Vec<Vec<f64>>,
    eps: f64,
}

impl Layers {
    fn build(graph: &PlannerGraph, max_layer: usize) -> Self {
        let m = graph.nodes.len();
        let w = graph.weight_table();
        let mut dp = Vec::with_capacity(max_layer + 1);
        dp.push(
            (0..m)
                .map(|p| {
                    let i = graph.nodes[p];
                    if graph.has_stop_edge(i) {
                        graph.source_weights[i]
                    } else {
                        f64::INFINITY
                    }
                })
                .collect::<Vec<_>>(),
        );
        for n in 1..=max_layer {
            let prev = &dp[n - 1];
            let layer = (0..m)
                .map(|p| {
                    (0..p)
                        .filter(|&q| prev[q].is_finite())
                        .map(|q| prev[q] + w[p][q])
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            dp.push(layer);
        }
        Layers { dp, w, eps: graph.tie_eps() }
    }

    /// Optimal `n`-step total cost and its tie-broken start position.
    fn best(&self, graph: &PlannerGraph, n: usize) -> Option<(f64, usize)> {
        let layer = &self.dp[n];
        let totals: Vec<(usize, f64)> = (0..layer.len())
            .filter(|&p| graph.has_start_edge(graph.nodes[p]) && layer[p].is_finite())
            .map(|p| (p, layer[p] - graph.source_weights[graph.nodes[p]]))
            .collect();
        let min = totals.iter().map(|&(_, v)| v).fold(f64::INFINITY, f64::min);
        totals
            .iter()
            .rev()
            .find(|&&(_, v)| v <= min + self.eps)
            .map(|&(p, _)| (min, p))
    }

    fn reconstruct(&self, n: usize, start: usize) -> Vec<usize> {
        let mut positions = vec![start];
        let mut cur = start;
        for layer in (1..=n).rev() {
            let target = self.dp[layer][cur];
            let prev = &self.dp[layer - 1];
            let next = (0..cur)
                .rev()
                .find(|&q| prev[q].is_finite() && prev[q] + self.w[cur][q] <= target + self.eps)
                .expect("an optimal predecessor exists");
            positions.push(next);
            cur = next;
        }
        positions
    }

    fn schedule(&self, graph: &PlannerGraph, n: usize) -> Result<Schedule> {
        let (_, start) = self
            .best(graph, n)
            .ok_or_else(|| Error::Infeasible(format!("no admissible {n}-step schedule")))?;
        graph.schedule_from_positions(&self.reconstruct(n, start))
    }
}

fn check_budget(graph: &PlannerGraph, k_steps: usize) -> Result<()> {
    if k_steps == 0 {
        return Err(Error::Domain("step budget must be at least 1".to_string()));
    }
    if k_steps > graph.max_steps() {
        return Err(Error::Infeasible(format!(
            "{k_steps} steps requested but the longest admissible chain has {}",
            graph.max_steps()
        )));
    }
    Ok(())
}

/// Best schedule with exactly `k_steps` transitions.
pub fn plan_fixed(graph: &PlannerGraph, k_steps: usize) -> Result<Schedule> {
    check_budget(graph, k_steps)?;
    Layers::build(graph, k_steps).schedule(graph, k_steps)
}

/// How the partial cost `W(P_partial)` of an `n`-step plan is measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoMode {
    /// Re-plan optimally with a budget of `n` steps.
    #[default]
    Replan,
    /// Cost of the first `n` steps of the single `k_max`-step plan, stopping
    /// where that prefix ends.
    Prefix,
}

/// Outcome of adaptive-length planning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptivePlanResult {
    pub schedule: Schedule,
    pub rho_curve: Vec<(usize, f64)>,
    /// Best single-jump total cost.
    pub w_max: f64,
    /// Best `k_max`-step total cost.
    pub w_min: f64,
    pub threshold: f64,
    pub mode: RhoMode,
}

/// Adaptive-length planning with the default [`RhoMode::Replan`].
pub fn plan_adaptive(graph: &PlannerGraph, rho_th: f64, k_max: usize) -> Result<AdaptivePlanResult> {
    plan_adaptive_with(graph, rho_th, k_max, RhoMode::Replan)
}

/// Grows the step budget `n = 1, 2, ...` until the explained gain ratio
/// `rho(n) = (W_max - W_n) / (W_max - W_min)` reaches `rho_th`.
pub fn plan_adaptive_with(
    graph: &PlannerGraph,
    rho_th: f64,
    k_max: usize,
    mode: RhoMode,
) -> Result<AdaptivePlanResult> {
    if !(rho_th > 0.0 && rho_th <= 1.0) {
        return Err(Error::Domain(format!("rho threshold must lie in (0, 1], got {rho_th}")));
    }
    check_budget(graph, k_max)?;
    let layers = Layers::build(graph, k_max);
    let best_cost = |n: usize| {
        layers
            .best(graph, n)
            .map(|(cost, _)| cost)
            .ok_or_else(|| Error::Infeasible(format!("no admissible {n}-step schedule")))
    };
    let w_max = best_cost(1)?;
    let w_min = best_cost(k_max)?;

    let full = match mode {
        RhoMode::Prefix => Some(layers.schedule(graph, k_max)?),
        RhoMode::Replan => None,
    };
    let partial = |n: usize| -> Result<(f64, Option<Schedule>)> {
        match &full {
            None => {
                if n == k_max {
                    Ok((w_min, None))
                } else {
                    Ok((best_cost(n)?, None))
                }
            }
            Some(plan) => {
                let prefix = Schedule::from_timesteps(graph, plan.timesteps[..=n].to_vec())?;
                Ok((prefix.total_cost, Some(prefix)))
            }
        }
    };

    let mut rho_curve = Vec::new();
    let mut stop = k_max;
    let mut prefix_schedule = None;
    if w_max == w_min {
        rho_curve.push((1, 1.0));
        stop = 1;
        if let Some(plan) = &full {
            prefix_schedule = Some(Schedule::from_timesteps(graph, plan.timesteps[..=1].to_vec())?);
        }
    } else {
        for n in 1..=k_max {
            let (w_n, prefix) = partial(n)?;
            let rho = (w_max - w_n) / (w_max - w_min);
            rho_curve.push((n, rho));
            if rho >= rho_th {
                stop = n;
                prefix_schedule = prefix;
                break;
            }
        }
    }

    let mut schedule = match prefix_schedule {
        Some(s) => s,
        None => layers.schedule(graph, stop)?,
    };
    schedule.rho_curve = Some(rho_curve.clone());
    Ok(AdaptivePlanResult { schedule, rho_curve, w_max, w_min, threshold: rho_th, mode })
}

/// The `k`-step schedule whose timesteps are the active nodes nearest to an
/// evenly spaced sequence between the extreme active nodes.
pub fn uniform_schedule(graph: &PlannerGraph, k_steps: usize) -> Result<Vec<f64>> {
    check_budget(graph, k_steps)?;
    let times = graph.dna.times();
    let active: Vec<f64> = graph.nodes.iter().map(|&i| times[i]).collect();
    let (lo, hi) = (active[0], active[active.len() - 1]);
    let mut out: Vec<f64> = Vec::with_capacity(k_steps + 1);
    for j in 0..=k_steps {
        let target = hi - (hi - lo) * j as f64 / k_steps as f64;
        let nearest = active
            .iter()
            .copied()
            .min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
            .expect("graph has active nodes");
        if out.last().is_some_and(|&prev| prev <= nearest) {
            return Err(Error::Infeasible(format!(
                "grid too coarse for a uniform {k_steps}-step schedule"
            )));
        }
        out.push(nearest);
    }
    Ok(out)
}
