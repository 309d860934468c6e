//! Two-player matrix games, payoff evaluation and the parameter-to-simplex map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clip applied to policy parameters before normalization.
pub const PARAM_FLOOR: f64 = 1e-6;

const SIMPLEX_TOL: f64 = 1e-9;

/// A probability vector on the (d-1)-simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MixedStrategy(Vec<f64>);

impl MixedStrategy {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "mixed strategy needs at least 2 actions, got {}",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidParameter(
                "mixed strategy entries must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidParameter(format!(
                "mixed strategy sums to {total}, not 1"
            )));
        }
        Ok(Self(probs))
    }

    pub fn uniform(d: usize) -> Self {
        Self(vec![1.0 / d as f64; d])
    }

    pub fn pure(d: usize, action: usize) -> Self {
        let mut probs = vec![0.0; d];
        probs[action] = 1.0;
        Self(probs)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        Self(probs)
    }
}

/// A bimatrix game with row-major d x d payoff matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGame {
    name: String,
    d: usize,
    payoff_p1: Vec<f64>,
    payoff_p2: Vec<f64>,
    is_zero_sum: bool,
    nash_target: Option<(MixedStrategy, MixedStrategy)>,
}

impl MatrixGame {
    pub fn new(
        name: impl Into<String>,
        payoff_p1: Vec<Vec<f64>>,
        payoff_p2: Vec<Vec<f64>>,
        nash_target: Option<(MixedStrategy, MixedStrategy)>,
    ) -> Result<Self> {
        let d = payoff_p1.len();
        if d < 2 {
            return Err(Error::InvalidGame(
                "payoff matrix must be at least 2x2".into(),
            ));
        }
        let square = |m: &Vec<Vec<f64>>| m.len() == d && m.iter().all(|row| row.len() == d);
        if !square(&payoff_p1) || !square(&payoff_p2) {
            return Err(Error::InvalidGame(format!(
                "payoff matrices must both be {d}x{d}"
            )));
        }
        if let Some((t1, t2)) = &nash_target {
            if t1.dim() != d || t2.dim() != d {
                return Err(Error::InvalidGame("nash target dimension mismatch".into()));
            }
        }
        let a: Vec<f64> = payoff_p1.into_iter().flatten().collect();
        let b: Vec<f64> = payoff_p2.into_iter().flatten().collect();
        let is_zero_sum =
            (0..d).all(|i| (0..d).all(|j| (b[i * d + j] + a[i * d + j]).abs() <= 1e-12));
        Ok(Self {
            name: name.into(),
            d,
            payoff_p1: a,
            payoff_p2: b,
            is_zero_sum,
            nash_target,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn is_zero_sum(&self) -> bool {
        self.is_zero_sum
    }

    pub fn nash_target(&self) -> Option<&(MixedStrategy, MixedStrategy)> {
        self.nash_target.as_ref()
    }

    pub fn p1(&self, i: usize, j: usize) -> f64 {
        self.payoff_p1[i * self.d + j]
    }

    pub fn p2(&self, i: usize, j: usize) -> f64 {
        self.payoff_p2[i * self.d + j]
    }

    /// Bilinear payoffs `(x' A y, x' B y)` on raw slices; callers guarantee dimensions.
    pub(crate) fn bilinear(&self, x: &[f64], y: &[f64]) -> (f64, f64) {
        let d = self.d;
        let mut u1 = 0.0;
        let mut u2 = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row_a = &self.payoff_p1[i * d..(i + 1) * d];
            let row_b = &self.payoff_p2[i * d..(i + 1) * d];
            let mut sa = 0.0;
            let mut sb = 0.0;
            for j in 0..d {
                sa += row_a[j] * y[j];
                sb += row_b[j] * y[j];
            }
            u1 += xi * sa;
            u2 += xi * sb;
        }
        (u1, u2)
    }

    /// `A y`: player 1's payoff for each pure action against `y`.
    pub fn row_payoffs(&self, y: &[f64]) -> Vec<f64> {
        let d = self.d;
        (0..d)
            .map(|i| (0..d).map(|j| self.payoff_p1[i * d + j] * y[j]).sum())
            .collect()
    }

    /// `B' x`: player 2's payoff for each pure action against `x`.
    pub fn col_payoffs(&self, x: &[f64]) -> Vec<f64> {
        let d = self.d;
        (0..d)
            .map(|j| (0..d).map(|i| self.payoff_p2[i * d + j] * x[i]).sum())
            .collect()
    }

    pub fn payoff_range(&self) -> (f64, f64) {
        let all = self.payoff_p1.iter().chain(self.payoff_p2.iter());
        all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
    }
}

/// Banded circulant Rock-Paper-Scissors: action i beats the `bandwidth` actions preceding it
/// and loses to the `bandwidth` actions following it.
pub fn make_rps(d: usize, bandwidth: usize) -> Result<MatrixGame> {
    if d < 3 || d.is_multiple_of(2) {
        return Err(Error::InvalidGame(format!(
            "rps dimension must be odd and >= 3, got {d}"
        )));
    }
    if bandwidth < 1 || bandwidth > (d - 1) / 2 {
        return Err(Error::InvalidGame(format!(
            "rps bandwidth must lie in [1, {}], got {bandwidth}",
            (d - 1) / 2
        )));
    }
    let mut a = vec![vec![0.0; d]; d];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let fwd = (j + d - i) % d;
            let back = (i + d - j) % d;
            if (1..=bandwidth).contains(&fwd) {
                *cell = -1.0;
            } else if (1..=bandwidth).contains(&back) {
                *cell = 1.0;
            }
        }
    }
    // Row 0 of RPS-3 is (0, -1, 1): rock loses to paper (j = i + 1) and beats scissors.
    let b = a
        .iter()
        .map(|row| row.iter().map(|v| -v).collect())
        .collect();
    let u = MixedStrategy::uniform(d);
    MatrixGame::new(format!("rps{d}"), a, b, Some((u.clone(), u)))
}

/// Default bandwidth: full (d-1)/2 for small games, 5 for d >= 100.
pub fn default_rps_bandwidth(d: usize) -> usize {
    if d >= 100 {
        5.min((d - 1) / 2)
    } else {
        (d - 1) / 2
    }
}

/// Stag Hunt with actions (Stag, Hare).
pub fn make_stag_hunt() -> MatrixGame {
    let a = vec![vec![5.0, 0.0], vec![3.0, 2.0]];
    let b = vec![vec![5.0, 3.0], vec![0.0, 2.0]];
    let stag = MixedStrategy::pure(2, 0);
    MatrixGame::new("stag_hunt", a, b, Some((stag.clone(), stag))).expect("static 2x2 game")
}

/// Battle of the Sexes with the standard (2,1)/(1,2) payoffs.
pub fn make_battle_of_sexes() -> MatrixGame {
    make_battle_of_sexes_with(
        vec![vec![2.0, 0.0], vec![0.0, 1.0]],
        vec![vec![1.0, 0.0], vec![0.0, 2.0]],
        0,
    )
    .expect("static 2x2 game")
}

pub fn make_battle_of_sexes_with(
    payoff_p1: Vec<Vec<f64>>,
    payoff_p2: Vec<Vec<f64>>,
    target_action: usize,
) -> Result<MatrixGame> {
    if payoff_p1.len() != 2 {
        return Err(Error::InvalidGame(
            "battle of the sexes is a 2x2 game".into(),
        ));
    }
    if target_action > 1 {
        return Err(Error::InvalidGame(format!(
            "target action {target_action} out of range"
        )));
    }
    let t = MixedStrategy::pure(2, target_action);
    MatrixGame::new(
        "battle_of_sexes",
        payoff_p1,
        payoff_p2,
        Some((t.clone(), t)),
    )
}

/// Expected payoffs `(x' A y, x' B y)`.
pub fn expected_payoff(
    game: &MatrixGame,
    x: &MixedStrategy,
    y: &MixedStrategy,
) -> Result<(f64, f64)> {
    for s in [x, y] {
        if s.dim() != game.dim() {
            return Err(Error::DimensionMismatch {
                expected: game.dim(),
                got: s.dim(),
            });
        }
    }
    Ok(game.bilinear(x.probs(), y.probs()))
}

/// Payoff range used to map raw payoffs into [0, 1] for analysis output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffBounds {
    pub u_min: f64,
    pub u_max: f64,
    pub eps: f64,
}

impl PayoffBounds {
    pub fn new(u_min: f64, u_max: f64, eps: f64) -> Result<Self> {
        if !(u_min <= u_max) || !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "payoff bounds need u_min <= u_max and eps > 0 (got {u_min}, {u_max}, {eps})"
            )));
        }
        Ok(Self { u_min, u_max, eps })
    }

    pub fn for_game(game: &MatrixGame) -> Self {
        let (lo, hi) = game.payoff_range();
        Self {
            u_min: lo,
            u_max: hi,
            eps: 1e-9,
        }
    }
}

/// `(u - u_min) / (u_max - u_min + eps)`. Only analysis outputs use this; optimization
/// always consumes raw payoffs.
pub fn normalize_payoff(u: f64, bounds: &PayoffBounds) -> f64 {
    (u - bounds.u_min) / (bounds.u_max - bounds.u_min + bounds.eps)
}

/// Clip each parameter to `[1e-6, 1]` and renormalize onto the simplex.
pub fn params_to_strategy(theta: &[f64]) -> MixedStrategy {
    MixedStrategy::from_raw(clip_normalize(theta))
}

pub(crate) fn clip_normalize(theta: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = theta
        .iter()
        .map(|&t| {
            if t.is_nan() {
                PARAM_FLOOR
            } else {
                t.clamp(PARAM_FLOOR, 1.0)
            }
        })
        .collect();
    let total: f64 = clipped.iter().sum();
    clipped.into_iter().map(|c| c / total).collect()
}
