//! Three-state resource game (Rich, Poor, Collapsed) scored by its stationary distribution.
//!
//! Policies give the probability of cooperating in each state. Scores are the
//! stationary-weighted stage payoffs after a trembling-hand perturbation.

use serde::{Deserialize, Serialize};

/// Default trembling-hand rate.
pub const DEFAULT_TREMBLE: f64 = 0.01;
/// Default power-iteration count.
pub const POWER_ITERS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceState {
    Rich,
    Poor,
    Collapsed,
}

impl ResourceState {
    pub const ALL: [ResourceState; 3] = [
        ResourceState::Rich,
        ResourceState::Poor,
        ResourceState::Collapsed,
    ];

    pub fn index(self) -> usize {
        match self {
            ResourceState::Rich => 0,
            ResourceState::Poor => 1,
            ResourceState::Collapsed => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ResourceState::Rich => "rich",
            ResourceState::Poor => "poor",
            ResourceState::Collapsed => "collapsed",
        }
    }
}

/// Per-state cooperation probabilities `Pr(C | s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatePolicy {
    pub p_rich: f64,
    pub p_poor: f64,
    pub p_collapsed: f64,
}

impl StatePolicy {
    pub fn new(p_rich: f64, p_poor: f64, p_collapsed: f64) -> Self {
        Self {
            p_rich,
            p_poor,
            p_collapsed,
        }
    }

    pub fn splat(p: f64) -> Self {
        Self::new(p, p, p)
    }

    /// Box-clip arbitrary parameters to `[0, 1]^3`.
    pub fn from_params(theta: &[f64]) -> Self {
        let c = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        Self::new(c(theta[0]), c(theta[1]), c(theta[2]))
    }

    pub fn get(&self, s: ResourceState) -> f64 {
        match s {
            ResourceState::Rich => self.p_rich,
            ResourceState::Poor => self.p_poor,
            ResourceState::Collapsed => self.p_collapsed,
        }
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.p_rich, self.p_poor, self.p_collapsed]
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(f(self.p_rich), f(self.p_poor), f(self.p_collapsed))
    }
}

/// Row player's stage matrices, rows/columns ordered (C, D).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageMatrices {
    pub a_rich: [[f64; 2]; 2],
    pub a_poor: [[f64; 2]; 2],
    pub a_collapsed: [[f64; 2]; 2],
}

impl Default for StageMatrices {
    fn default() -> Self {
        Self {
            a_rich: [[4.0, 0.0], [5.0, 1.0]],
            a_poor: [[2.0, 0.0], [3.0, 0.5]],
            a_collapsed: [[0.5, -0.5], [1.0, 0.0]],
        }
    }
}

impl StageMatrices {
    pub fn get(&self, s: ResourceState) -> &[[f64; 2]; 2] {
        match s {
            ResourceState::Rich => &self.a_rich,
            ResourceState::Poor => &self.a_poor,
            ResourceState::Collapsed => &self.a_collapsed,
        }
    }
}

/// Row-stochastic 3x3 transition matrix over (Rich, Poor, Collapsed).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionMatrix(pub [[f64; 3]; 3]);

impl TransitionMatrix {
    pub fn identity() -> Self {
        Self([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn row(&self, i: usize) -> [f64; 3] {
        self.0[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryDistribution(pub [f64; 3]);

impl StationaryDistribution {
    pub fn get(&self, s: ResourceState) -> f64 {
        self.0[s.index()]
    }

    /// `|| mu M - mu ||_1`.
    pub fn residual(&self, m: &TransitionMatrix) -> f64 {
        let next = step(&self.0, m);
        next.iter()
            .zip(self.0.iter())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

/// `(1 - eps) p + eps / 2` entrywise.
pub fn tremble(p: &StatePolicy, eps: f64) -> StatePolicy {
    p.map(|v| (1.0 - eps) * v + eps / 2.0)
}

pub fn build_transition(p: &StatePolicy, q: &StatePolicy) -> TransitionMatrix {
    let down = (1.0 - p.p_rich) * (1.0 - q.p_rich);
    let restore = 0.8 * p.p_poor * q.p_poor;
    let collapse = (1.0 - p.p_poor) * (1.0 - q.p_poor);
    let recover = 0.2 * p.p_collapsed * q.p_collapsed;
    TransitionMatrix([
        [1.0 - down, down, 0.0],
        [restore, 1.0 - restore - collapse, collapse],
        [0.0, recover, 1.0 - recover],
    ])
}

fn step(mu: &[f64; 3], m: &TransitionMatrix) -> [f64; 3] {
    let mut next = [0.0; 3];
    for (i, &w) in mu.iter().enumerate() {
        for (j, slot) in next.iter_mut().enumerate() {
            *slot += w * m.0[i][j];
        }
    }
    next
}

/// Power iteration from the uniform distribution for a fixed number of steps.
pub fn stationary_distribution(m: &TransitionMatrix, iters: usize) -> StationaryDistribution {
    let mut mu = [1.0 / 3.0; 3];
    for _ in 0..iters {
        mu = step(&mu, m);
    }
    StationaryDistribution(mu)
}

/// Stage payoffs `(pi_p' A_s pi_q, pi_q' A_s' pi_p)`.
pub fn stage_payoffs(
    stage: &StageMatrices,
    s: ResourceState,
    p: &StatePolicy,
    q: &StatePolicy,
) -> (f64, f64) {
    let a = stage.get(s);
    let pp = [p.get(s), 1.0 - p.get(s)];
    let qq = [q.get(s), 1.0 - q.get(s)];
    let mut r1 = 0.0;
    let mut r2 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            r1 += pp[i] * a[i][j] * qq[j];
            r2 += qq[i] * a[i][j] * pp[j];
        }
    }
    (r1, r2)
}

/// The resource game with its tremble rate and stage payoffs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResourceGame {
    pub eps: f64,
    pub iters: usize,
    pub stage: StageMatrices,
}

impl Default for ResourceGame {
    fn default() -> Self {
        Self {
            eps: DEFAULT_TREMBLE,
            iters: POWER_ITERS,
            stage: StageMatrices::default(),
        }
    }
}

impl ResourceGame {
    pub fn with_tremble(eps: f64) -> Self {
        Self {
            eps,
            ..Self::default()
        }
    }

    /// Stationary-weighted scores `(J1, J2)` together with the stationary distribution.
    pub fn score_detailed(
        &self,
        p: &StatePolicy,
        q: &StatePolicy,
    ) -> ((f64, f64), StationaryDistribution) {
        let pt = tremble(p, self.eps);
        let qt = tremble(q, self.eps);
        let m = build_transition(&pt, &qt);
        let mu = stationary_distribution(&m, self.iters);
        let mut j = (0.0, 0.0);
        for s in ResourceState::ALL {
            let (r1, r2) = stage_payoffs(&self.stage, s, &pt, &qt);
            j.0 += mu.get(s) * r1;
            j.1 += mu.get(s) * r2;
        }
        (j, mu)
    }

    pub fn score(&self, p: &StatePolicy, q: &StatePolicy) -> (f64, f64) {
        self.score_detailed(p, q).0
    }
}

/// Stationary-weighted scores with the default stage matrices and 50 power iterations.
pub fn score(p: &StatePolicy, q: &StatePolicy, eps: f64) -> (f64, f64) {
    ResourceGame::with_tremble(eps).score(p, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn tremble_examples() {
        let t = tremble(&StatePolicy::splat(1.0), 0.01);
        assert_abs_diff_eq!(t.p_rich, 0.995, epsilon = 1e-15);
        assert_abs_diff_eq!(t.p_collapsed, 0.995, epsilon = 1e-15);
        let p = StatePolicy::new(0.1, 0.7, 0.3);
        assert_eq!(tremble(&p, 0.0), p);
        assert_eq!(
            tremble(&StatePolicy::splat(0.5), 0.37),
            StatePolicy::splat(0.5)
        );
    }

    #[test]
    fn transition_rows_from_paper_rules() {
        let all_c = StatePolicy::splat(1.0);
        let all_d = StatePolicy::splat(0.0);
        let m = build_transition(&all_c, &all_c);
        assert_abs_diff_eq!(m.row(1)[0], 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(m.row(1)[1], 0.2, epsilon = 1e-15);
        assert_eq!(m.row(1)[2], 0.0);
        assert_eq!(m.row(2)[0], 0.0);
        assert_abs_diff_eq!(m.row(2)[1], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(m.row(2)[2], 0.8, epsilon = 1e-15);
        let m = build_transition(&all_d, &all_d);
        assert_eq!(m.row(1), [0.0, 0.0, 1.0]);
        assert_eq!(m.row(0), [0.0, 1.0, 0.0]);
    }

    #[test]
    fn stationary_of_identity_is_uniform() {
        let mu = stationary_distribution(&TransitionMatrix::identity(), POWER_ITERS);
        for v in mu.0 {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    /// Exact absorption probabilities for an absorbing chain, starting uniform.
    /// Rich -> Poor -> Collapsed with Collapsed absorbing: all mass ends in Collapsed,
    /// and after n steps the mass outside Collapsed is zero once n >= 2.
    #[test]
    fn stationary_all_defect_collapses() {
        let m = build_transition(&StatePolicy::splat(0.0), &StatePolicy::splat(0.0));
        let mu = stationary_distribution(&m, POWER_ITERS);
        assert_abs_diff_eq!(mu.0[2], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mu.0[0] + mu.0[1], 0.0, epsilon = 1e-12);
    }

    fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut c = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        c
    }

    /// Independent route: u M^n with M^n by repeated squaring.
    fn oracle_distribution(m: &TransitionMatrix, n: u32) -> [f64; 3] {
        let mut result = TransitionMatrix::identity().0;
        let mut base = m.0;
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                result = mat_mul(&result, &base);
            }
            base = mat_mul(&base, &base);
            e >>= 1;
        }
        let mut mu = [0.0; 3];
        for row in result {
            for j in 0..3 {
                mu[j] += row[j] / 3.0;
            }
        }
        mu
    }

    #[test]
    fn stationary_all_cooperate_is_rich() {
        // Rich is absorbing under mutual cooperation; after 50 steps the residual mass in
        // Poor/Collapsed is of order 0.8^50 ~ 1.4e-5 / 3.
        let m = build_transition(&StatePolicy::splat(1.0), &StatePolicy::splat(1.0));
        let mu = stationary_distribution(&m, POWER_ITERS);
        let oracle = oracle_distribution(&m, POWER_ITERS as u32);
        for (a, b) in mu.0.iter().zip(oracle) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(mu.0[2], 0.8f64.powi(50) / 3.0, epsilon = 1e-15);
        assert!(1.0 - mu.0[0] < 1e-5);
    }

    #[test]
    fn power_iteration_matches_matrix_power() {
        let m = build_transition(
            &StatePolicy::new(0.2, 0.7, 0.4),
            &StatePolicy::new(0.9, 0.1, 0.5),
        );
        let mu = stationary_distribution(&m, POWER_ITERS);
        let oracle = oracle_distribution(&m, POWER_ITERS as u32);
        for (a, b) in mu.0.iter().zip(oracle) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn stage_payoff_examples() {
        let stage = StageMatrices::default();
        let c = StatePolicy::splat(1.0);
        let d = StatePolicy::splat(0.0);
        assert_eq!(
            stage_payoffs(&stage, ResourceState::Rich, &c, &c),
            (4.0, 4.0)
        );
        assert_eq!(
            stage_payoffs(&stage, ResourceState::Collapsed, &d, &d),
            (0.0, 0.0)
        );
        // cooperator reads A_Poor[C][D] = 0; the defector reads A_Poor[D][C] = 3.
        assert_eq!(
            stage_payoffs(&stage, ResourceState::Poor, &c, &d),
            (0.0, 3.0)
        );
    }

    #[test]
    fn score_examples() {
        let c = StatePolicy::splat(1.0);
        let d = StatePolicy::splat(0.0);
        let (j1, j2) = score(&c, &c, 0.0);
        assert_abs_diff_eq!(j1, 4.0, epsilon = 1e-3);
        assert_abs_diff_eq!(j2, 4.0, epsilon = 1e-3);
        let (j1, j2) = score(&d, &d, 0.0);
        assert_abs_diff_eq!(j1, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(j2, 0.0, epsilon = 1e-12);
        let p = StatePolicy::new(0.3, 0.6, 0.9);
        let (j1, j2) = score(&p, &p, 0.01);
        assert_eq!(j1, j2);
    }

    #[test]
    fn state_names() {
        let names: Vec<_> = ResourceState::ALL.iter().map(|s| s.name()).collect();
        assert_eq!(names, ["rich", "poor", "collapsed"]);
    }
}
