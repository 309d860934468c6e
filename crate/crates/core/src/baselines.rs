//! Comparison algorithms: PureNES, fictitious play, OGDA, and the population Baselines A
//! (plain generalization fitness) and B (Hall of Fame).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coevolution::{
    eval_gen, mgm_e_nes_generation, opponent_count, reproduce, GaParams, Individual, PlayerRuntime,
    PlayerStats, PopulationRuntime, PopulationStats,
};
use crate::env::{Evaluator, Game, Policy, Role};
use crate::error::{Error, Result};
use crate::games::{clip_normalize, MatrixGame};
use crate::governance::FitnessTriple;
use crate::markov::{ResourceGame, StatePolicy};
use crate::metrics::percentile;

/// PureNES: the NES actuator and AEC with the whole governance layer removed. Both
/// runtimes must have been built with `governance = false`.
pub fn pure_nes_generation<R: Rng + ?Sized>(
    p1: &mut PlayerRuntime,
    p2: &mut PlayerRuntime,
    ev: &Evaluator,
    rho: f64,
    rng1: &mut R,
    rng2: &mut R,
) -> Result<[PlayerStats; 2]> {
    if p1.governance || p2.governance {
        return Err(Error::InvalidParameter(
            "PureNES runtimes must have governance disabled".into(),
        ));
    }
    mgm_e_nes_generation(p1, p2, ev, rho, rng1, rng2)
}

/// Empirical action counts of both players.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpState {
    pub counts_p1: Vec<f64>,
    pub counts_p2: Vec<f64>,
    pub t: u64,
}

impl FpState {
    /// Pseudo-count one per action.
    pub fn new(d: usize) -> Self {
        Self {
            counts_p1: vec![1.0; d],
            counts_p2: vec![1.0; d],
            t: 0,
        }
    }

    pub fn empirical(&self) -> (Vec<f64>, Vec<f64>) {
        let norm = |c: &[f64]| {
            let s: f64 = c.iter().sum();
            c.iter().map(|v| v / s).collect::<Vec<f64>>()
        };
        (norm(&self.counts_p1), norm(&self.counts_p2))
    }
}

/// First index of the maximum.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Simultaneous best responses to the opponents' empirical mixtures. Each player scans its
/// `d` pure actions, so a step costs `2d` queries.
pub fn fp_step(state: &mut FpState, game: &MatrixGame, ev: &Evaluator) -> (usize, usize) {
    let (x, y) = state.empirical();
    let a1 = argmax(&game.row_payoffs(&y));
    let a2 = argmax(&game.col_payoffs(&x));
    ev.charge(2 * game.dim() as u64);
    state.counts_p1[a1] += 1.0;
    state.counts_p2[a2] += 1.0;
    state.t += 1;
    (a1, a2)
}

/// The 8 deterministic state policies, bit `s` set meaning cooperate in state `s`.
pub fn deterministic_policies() -> Vec<StatePolicy> {
    (0..8u8)
        .map(|b| {
            let bit = |k: u8| f64::from((b >> k) & 1);
            StatePolicy::new(bit(0), bit(1), bit(2))
        })
        .collect()
}

/// The 8x8 bimatrix induced by the deterministic state policies. Costs 64 queries.
pub fn induced_matrix_game(game: &ResourceGame, ev: &Evaluator) -> Result<MatrixGame> {
    let pols = deterministic_policies();
    let mut a = vec![vec![0.0; 8]; 8];
    let mut b = vec![vec![0.0; 8]; 8];
    for (i, p) in pols.iter().enumerate() {
        for (j, q) in pols.iter().enumerate() {
            let (u1, u2) = game.score(p, q);
            a[i][j] = u1;
            b[i][j] = u2;
        }
    }
    ev.charge(64);
    MatrixGame::new("markov_resource_induced", a, b, None)
}

/// Expected cooperation per state under a mixture over the deterministic policies.
pub fn mixture_cooperation(weights: &[f64]) -> [f64; 3] {
    let mut c = [0.0; 3];
    for (w, p) in weights.iter().zip(deterministic_policies()) {
        for (ck, pk) in c.iter_mut().zip(p.to_array()) {
            *ck += w * pk;
        }
    }
    c
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OgdaParams {
    pub eta: f64,
    /// Central finite-difference step for the resource game.
    pub fd_step: f64,
}

impl Default for OgdaParams {
    fn default() -> Self {
        Self {
            eta: 0.1,
            fd_step: 1e-3,
        }
    }
}

impl OgdaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.fd_step > 0.0) {
            return Err(Error::InvalidParameter(
                "ogda.eta and ogda.fd_step must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Strategies (simplex vectors, or cooperation probabilities for the resource game) and
/// the previous gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OgdaState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub prev_grad_x: Option<Vec<f64>>,
    pub prev_grad_y: Option<Vec<f64>>,
    pub params: OgdaParams,
}

impl OgdaState {
    /// Start from raw parameters mapped the same way as the parameterized learners.
    pub fn from_params(game: &Game, theta1: &[f64], theta2: &[f64], params: OgdaParams) -> Self {
        let map = |t: &[f64]| match game {
            Game::Matrix(_) => clip_normalize(t),
            Game::Resource(_) => StatePolicy::from_params(t).to_array().to_vec(),
        };
        Self {
            x: map(theta1),
            y: map(theta2),
            prev_grad_x: None,
            prev_grad_y: None,
            params,
        }
    }

    /// Queries one step costs.
    pub fn step_cost(game: &Game) -> u64 {
        match game {
            Game::Matrix(g) => 2 * g.dim() as u64,
            Game::Resource(_) => 12,
        }
    }
}

fn fd_grad(ev: &Evaluator, role: Role, own: &[f64], opp: &[f64], h: f64) -> Vec<f64> {
    let opp = Policy::State(StatePolicy::from_params(opp));
    (0..own.len())
        .map(|k| {
            let mut up = own.to_vec();
            let mut dn = own.to_vec();
            up[k] += h;
            dn[k] -= h;
            let f =
                |v: &[f64]| ev.payoff_for(role, &Policy::State(StatePolicy::from_params(v)), &opp);
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

/// Optimistic simultaneous ascent of each player on its own payoff.
pub fn ogda_step(state: &mut OgdaState, ev: &Evaluator) {
    let (gx, gy) = match ev.game() {
        Game::Matrix(g) => {
            ev.charge(2 * g.dim() as u64);
            (g.row_payoffs(&state.y), g.col_payoffs(&state.x))
        }
        Game::Resource(_) => {
            let h = state.params.fd_step;
            (
                fd_grad(ev, Role::Row, &state.x, &state.y, h),
                fd_grad(ev, Role::Col, &state.y, &state.x, h),
            )
        }
    };
    let eta = state.params.eta;
    let step = |v: &[f64], g: &[f64], prev: &Option<Vec<f64>>| -> Vec<f64> {
        let prev = prev.as_deref().unwrap_or(g);
        v.iter()
            .zip(g)
            .zip(prev)
            .map(|((x, gk), pk)| x + eta * (2.0 * gk - pk))
            .collect()
    };
    let nx = step(&state.x, &gx, &state.prev_grad_x);
    let ny = step(&state.y, &gy, &state.prev_grad_y);
    let project = |v: Vec<f64>| match ev.game() {
        Game::Matrix(_) => project_simplex(&v),
        Game::Resource(_) => v.into_iter().map(|p| p.clamp(0.0, 1.0)).collect(),
    };
    state.x = project(nx);
    state.y = project(ny);
    state.prev_grad_x = Some(gx);
    state.prev_grad_y = Some(gy);
}

/// Baseline A: fitness is the generalization score alone.
pub fn baseline_a_generation<R: Rng + ?Sized>(
    a: &mut PopulationRuntime,
    b: &mut PopulationRuntime,
    ga: &GaParams,
    rho: f64,
    ev: &Evaluator,
    rng: &mut R,
) -> Result<[PopulationStats; 2]> {
    hall_of_fame_generation(a, b, ga, 0, rho, ev, rng)
}

/// Queries per generation for one population playing `k` sampled opponents plus the
/// opponent's Hall of Fame.
pub fn hall_of_fame_cost(size: usize, opp_size: usize, opp_hof_len: usize, rho: f64) -> u64 {
    size as u64 * (opponent_count(opp_size, rho) + opp_hof_len) as u64
}

fn hof_scores<R: Rng + ?Sized>(
    pop: &PopulationRuntime,
    pool: &[Policy],
    hof: &[Policy],
    rho: f64,
    ev: &Evaluator,
    rng: &mut R,
) -> Vec<f64> {
    pop.members
        .iter()
        .map(|m| {
            let me = Policy::Mixed(m.strategy.clone());
            let g = eval_gen(pop.role, &me, pool, rho, ev, rng);
            if hof.is_empty() {
                g
            } else {
                let h = hof
                    .iter()
                    .map(|o| ev.payoff_for(pop.role, &me, o))
                    .sum::<f64>()
                    / hof.len() as f64;
                0.5 * g + 0.5 * h
            }
        })
        .collect()
}

fn induct(pop: &mut PopulationRuntime, fitness: &[f64], capacity: usize) -> Option<u64> {
    if capacity == 0 {
        return None;
    }
    let mut best = 0;
    for (i, f) in fitness.iter().enumerate() {
        if *f > fitness[best] {
            best = i;
        }
    }
    let champ: Individual = pop.members[best].clone();
    let id = champ.id;
    pop.hall_of_fame.push_back(champ);
    while pop.hall_of_fame.len() > capacity {
        pop.hall_of_fame.pop_front();
    }
    Some(id)
}

/// Baseline B: each member's fitness averages its generalization score and its mean
/// payoff against the opponent's Hall of Fame. After scoring, each population inducts its
/// best member into its own Hall of Fame (FIFO, `hof_capacity`).
pub fn hall_of_fame_generation<R: Rng + ?Sized>(
    a: &mut PopulationRuntime,
    b: &mut PopulationRuntime,
    ga: &GaParams,
    hof_capacity: usize,
    rho: f64,
    ev: &Evaluator,
    rng: &mut R,
) -> Result<[PopulationStats; 2]> {
    let pols = |p: &PopulationRuntime| -> Vec<Policy> {
        p.members
            .iter()
            .map(|m| Policy::Mixed(m.strategy.clone()))
            .collect()
    };
    let hof = |p: &PopulationRuntime| -> Vec<Policy> {
        p.hall_of_fame
            .iter()
            .map(|m| Policy::Mixed(m.strategy.clone()))
            .collect()
    };
    let (pa, pb) = (pols(a), pols(b));
    let (ha, hb) = (hof(a), hof(b));
    let fa = hof_scores(a, &pb, &hb, rho, ev, rng);
    let fb = hof_scores(b, &pa, &ha, rho, ev, rng);
    induct(a, &fa, hof_capacity);
    induct(b, &fb, hof_capacity);
    let ra = reproduce(a, &fa, ga, rng);
    let rb = reproduce(b, &fb, ga, rng);
    let stats = |f: &[f64], replaced| PopulationStats {
        f_mean: f.iter().sum::<f64>() / f.len() as f64,
        f_75: percentile(f, 75.0).expect("nonempty"),
        alpha_mean: 0.0,
        marker_updated: false,
        replaced,
        fitness: f
            .iter()
            .map(|&v| FitnessTriple {
                base: v,
                gen: v,
                alpha: 0.0,
                composite: v,
            })
            .collect(),
    };
    Ok([stats(&fa, ra), stats(&fb, rb)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::make_rps;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rps3() -> (MatrixGame, Evaluator) {
        let g = make_rps(3, 1).unwrap();
        (g.clone(), Evaluator::new(Game::Matrix(g)))
    }

    #[test]
    fn ogda_gradient_against_rock() {
        let (g, _) = rps3();
        assert_eq!(g.row_payoffs(&[1.0, 0.0, 0.0]), vec![0.0, 1.0, -1.0]);
    }

    #[test]
    fn ogda_fixed_point_at_equilibrium() {
        let (g, ev) = rps3();
        let u = vec![1.0 / 3.0; 3];
        let grad = g.row_payoffs(&u);
        let mut s = OgdaState {
            x: u.clone(),
            y: u.clone(),
            prev_grad_x: Some(grad.clone()),
            prev_grad_y: Some(grad),
            params: OgdaParams::default(),
        };
        ogda_step(&mut s, &ev);
        for (a, b) in s.x.iter().zip(&u) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        assert_eq!(ev.queries(), 6);
    }

    #[test]
    fn projection_examples() {
        let p = vec![0.2, 0.3, 0.5];
        let q = project_simplex(&p);
        for (a, b) in p.iter().zip(&q) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        assert_eq!(project_simplex(&[2.0, 0.0, 0.0]), vec![1.0, 0.0, 0.0]);
        let r = project_simplex(&[0.5, 0.5, 0.5]);
        for v in r {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn fp_first_step_and_counts() {
        let (g, ev) = rps3();
        let mut s = FpState::new(3);
        // Against a uniform opponent every action ties at 0; the lowest index wins.
        assert_eq!(fp_step(&mut s, &g, &ev), (0, 0));
        assert_eq!(s.counts_p1, vec![2.0, 1.0, 1.0]);
        assert_eq!(s.t, 1);
        assert_eq!(ev.queries(), 6);
    }

    #[test]
    fn fp_rps_converges_in_long_run() {
        let (g, ev) = rps3();
        let mut s = FpState::new(3);
        for _ in 0..10_000 {
            fp_step(&mut s, &g, &ev);
        }
        let (x, _) = s.empirical();
        let kl: f64 = x.iter().map(|p| p * (p * 3.0).ln()).sum();
        assert!(kl < 1e-3, "kl {kl}");
    }

    #[test]
    fn deterministic_policy_table() {
        let pols = deterministic_policies();
        assert_eq!(pols.len(), 8);
        assert_eq!(pols[0].to_array(), [0.0, 0.0, 0.0]);
        assert_eq!(pols[5].to_array(), [1.0, 0.0, 1.0]);
        assert_eq!(
            mixture_cooperation(&[0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5]),
            [1.0, 0.5, 0.5]
        );
    }

    #[test]
    fn hof_capacity_and_inductee() {
        let (_, ev) = rps3();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut a = PopulationRuntime::random(Role::Row, 10, 3, &mut rng).unwrap();
        let mut b = PopulationRuntime::random(Role::Col, 10, 3, &mut rng).unwrap();
        let ga = GaParams {
            size: 10,
            ..GaParams::default()
        };
        for _ in 0..6 {
            let before: Vec<u64> = a.ids();
            let [sa, _] =
                hall_of_fame_generation(&mut a, &mut b, &ga, 4, 0.5, &ev, &mut rng).unwrap();
            let composites: Vec<f64> = sa.fitness.iter().map(|f| f.composite).collect();
            let mut best = 0;
            for i in 0..composites.len() {
                if composites[i] > composites[best] {
                    best = i;
                }
            }
            assert_eq!(a.hall_of_fame.back().unwrap().id, before[best]);
            assert!(a.hall_of_fame.len() <= 4);
        }
        assert_eq!(a.hall_of_fame.len(), 4);
    }
}
