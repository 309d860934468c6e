//! Marker-gene governance: DWAM fitness shaping, persistence counters, marker
//! selection and the archive-backed marker rollback used by the NES loop.

use std::collections::{HashMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// DWAM gate parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DwamParams {
    /// Base anchoring weight; the marker weight never exceeds it.
    pub omega: f64,
    /// Transition sharpness.
    pub s: f64,
}

impl Default for DwamParams {
    fn default() -> Self {
        Self {
            omega: 0.9,
            s: 100.0,
        }
    }
}

impl DwamParams {
    pub fn new(omega: f64, s: f64) -> Result<Self> {
        let p = Self { omega, s };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        // omega = 0.5 is admitted so the gate can be pinned to an even blend in ablations.
        if !(self.omega >= 0.5 && self.omega < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "dwam.omega must lie in [0.5, 1), got {}",
                self.omega
            )));
        }
        if !(self.s > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dwam.s must be positive, got {}",
                self.s
            )));
        }
        Ok(())
    }
}

/// Marker bookkeeping settings shared by both learning regimes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarkerParams {
    pub archive_capacity: usize,
    pub rollback_horizon: u32,
    pub keepcount_threshold: u32,
    pub buffercount_threshold: u32,
}

impl Default for MarkerParams {
    fn default() -> Self {
        Self {
            archive_capacity: 10,
            rollback_horizon: 5,
            keepcount_threshold: 5,
            buffercount_threshold: 5,
        }
    }
}

impl MarkerParams {
    pub fn validate(&self) -> Result<()> {
        if self.rollback_horizon == 0
            || self.keepcount_threshold == 0
            || self.buffercount_threshold == 0
        {
            return Err(Error::InvalidParameter(
                "marker horizons and thresholds must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Gate inputs `(beta, delta)` for a candidate at threshold `l`.
#[inline]
pub fn gate_inputs(b_hat: f64, g_hat: f64, l: f64) -> (f64, f64) {
    let beta = b_hat - l;
    let delta = (l - g_hat).max(0.0);
    (beta, delta)
}

/// Marker weight as a function of the gate inputs directly.
#[inline]
pub fn alpha_from_gate(beta: f64, delta: f64, params: &DwamParams) -> f64 {
    if beta < 0.0 {
        params.omega
    } else {
        params.omega - (params.omega - 0.5) * (1.0 - (-params.s * delta * beta).exp())
    }
}

/// Marker weight `alpha(b_hat, g_hat; l)` in `[0.5, omega]`.
pub fn dwam_alpha(b_hat: f64, g_hat: f64, l: f64, params: &DwamParams) -> f64 {
    let (beta, delta) = gate_inputs(b_hat, g_hat, l);
    alpha_from_gate(beta, delta, params)
}

/// `d alpha / d beta` with `delta` held fixed; right-derivative at `beta = 0`.
pub fn dwam_alpha_d1(b_hat: f64, g_hat: f64, l: f64, params: &DwamParams) -> f64 {
    let (beta, delta) = gate_inputs(b_hat, g_hat, l);
    if beta < 0.0 {
        return 0.0;
    }
    let sd = params.s * delta;
    -(params.omega - 0.5) * sd * (-sd * beta).exp()
}

/// `d^2 alpha / d beta^2` with `delta` held fixed; right-derivative at `beta = 0`.
pub fn dwam_alpha_d2(b_hat: f64, g_hat: f64, l: f64, params: &DwamParams) -> f64 {
    let (beta, delta) = gate_inputs(b_hat, g_hat, l);
    if beta < 0.0 {
        return 0.0;
    }
    let sd = params.s * delta;
    (params.omega - 0.5) * sd * sd * (-sd * beta).exp()
}

pub fn composite_fitness(b_hat: f64, g_hat: f64, alpha: f64) -> f64 {
    alpha * b_hat + (1.0 - alpha) * g_hat
}

/// Base, generalization and composite fitness of one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessTriple {
    pub base: f64,
    pub gen: f64,
    pub alpha: f64,
    pub composite: f64,
}

impl FitnessTriple {
    pub fn evaluate(base: f64, gen: f64, l: f64, params: &DwamParams) -> Self {
        let alpha = dwam_alpha(base, gen, l, params);
        Self {
            base,
            gen,
            alpha,
            composite: composite_fitness(base, gen, alpha),
        }
    }
}

/// Consecutive-generation survival counters keyed by individual id.
pub type KeepCounts = HashMap<u64, u32>;

/// Survivors increment, newcomers start at 1, departed ids are dropped.
pub fn update_keep_counts(
    prev_pop_ids: &[u64],
    cur_pop_ids: &[u64],
    counts: &KeepCounts,
) -> KeepCounts {
    let prev: std::collections::HashSet<u64> = prev_pop_ids.iter().copied().collect();
    cur_pop_ids
        .iter()
        .map(|&id| {
            let c = match counts.get(&id) {
                Some(&c) if prev.contains(&id) => c + 1,
                _ => 1,
            };
            (id, c)
        })
        .collect()
}

/// Timing gate: consecutive generations with `f_stat > l`.
pub fn buffer_tick(f_stat: f64, l: f64, buffer_count: u32) -> u32 {
    if f_stat > l {
        buffer_count + 1
    } else {
        0
    }
}

/// `ceil(1 / elimination_rate)`.
pub fn update_horizon_from_elimination(theta_rate: f64) -> Result<u32> {
    if !(theta_rate > 0.0 && theta_rate <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "elimination rate must lie in (0, 1], got {theta_rate}"
        )));
    }
    Ok((1.0 / theta_rate - 1e-12).ceil() as u32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerCandidate {
    pub id: u64,
    pub keep_count: u32,
    pub fitness: f64,
}

/// Lexicographic argmax on `(keep_count, fitness)`; the first candidate wins exact ties.
/// Returns `None` when there is no eligible candidate.
pub fn select_marker(candidates: &[MarkerCandidate]) -> Option<u64> {
    let mut best: Option<&MarkerCandidate> = None;
    for c in candidates {
        let better = match best {
            None => true,
            Some(b) => {
                c.keep_count > b.keep_count
                    || (c.keep_count == b.keep_count && c.fitness > b.fitness)
            }
        };
        if better {
            best = Some(c);
        }
    }
    best.map(|c| c.id)
}

/// Per-player marker bookkeeping for the NES loop: published marker, bounded FIFO
/// archive of own elites, and the rollback trigger counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerState {
    pub marker: Vec<f64>,
    pub archive: VecDeque<Vec<f64>>,
    pub capacity: usize,
    pub buffer_count: u32,
    pub rollback_count: u32,
    pub horizon: u32,
}

impl MarkerState {
    pub fn new(marker: Vec<f64>, capacity: usize, horizon: u32) -> Self {
        Self {
            marker,
            archive: VecDeque::with_capacity(capacity + 1),
            capacity,
            buffer_count: 0,
            rollback_count: 0,
            horizon,
        }
    }
}

/// Append an elite, evicting the oldest entry beyond capacity.
pub fn archive_push(state: &mut MarkerState, elite: Vec<f64>) {
    state.archive.push_back(elite);
    while state.archive.len() > state.capacity {
        state.archive.pop_front();
    }
}

/// Rollback tick: advance the trigger counter with `f_max`; once it reaches the horizon
/// and the archive is nonempty, republish a uniformly drawn archive member.
/// Returns true when the marker was replaced.
pub fn rollback_step<R: Rng + ?Sized>(
    state: &mut MarkerState,
    f_max: f64,
    l: f64,
    rng: &mut R,
) -> bool {
    state.rollback_count = buffer_tick(f_max, l, state.rollback_count);
    if state.rollback_count >= state.horizon && !state.archive.is_empty() {
        let pick = rng.random_range(0..state.archive.len());
        state.marker = state.archive[pick].clone();
        state.rollback_count = 0;
        true
    } else {
        false
    }
}
