//! The two learning regimes: the synchronous two-player MGM-E-NES loop and the
//! two-population GA with marker genes.

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::controller::{
    controller_step, ControllerDiagnostics, ControllerInputs, ControllerParams, ControllerState,
};
use crate::env::{Evaluator, Policy, Role};
use crate::error::{Error, Result};
use crate::games::{clip_normalize, params_to_strategy, MixedStrategy};
use crate::governance::{
    archive_push, buffer_tick, rollback_step, select_marker, update_keep_counts, DwamParams,
    FitnessTriple, KeepCounts, MarkerCandidate, MarkerParams, MarkerState,
};
use crate::metrics::{mean_strategy, percentile};
use crate::nes::{
    aec_step, mean_update, nes_gradient, policy_entropy_normalized, sample_batch, AecParams,
    AecState, NesParams, PerturbationBatch, SearchDistribution,
};

/// `k = ceil(rho * pool_size)`, at least 1 and at most the pool.
pub fn opponent_count(pool_size: usize, rho: f64) -> usize {
    // The small offset keeps products like 0.3 * 10 from rounding up past the integer.
    (((rho * pool_size as f64) - 1e-9).ceil() as usize).clamp(1, pool_size.max(1))
}

/// `k` distinct indices drawn uniformly from `0..pool_size`.
pub fn sample_opponents<R: Rng + ?Sized>(pool_size: usize, rho: f64, rng: &mut R) -> Vec<usize> {
    sample(rng, pool_size, opponent_count(pool_size, rho)).into_vec()
}

/// Payoff of `candidate` against the opponent's published marker.
pub fn eval_base(role: Role, candidate: &Policy, opponent_marker: &Policy, ev: &Evaluator) -> f64 {
    ev.payoff_for(role, candidate, opponent_marker)
}

/// Mean payoff of `candidate` over a fresh uniform sample of the opponent pool.
pub fn eval_gen<R: Rng + ?Sized>(
    role: Role,
    candidate: &Policy,
    pool: &[Policy],
    rho: f64,
    ev: &Evaluator,
    rng: &mut R,
) -> f64 {
    let idx = sample_opponents(pool.len(), rho, rng);
    let total: f64 = idx
        .iter()
        .map(|&j| ev.payoff_for(role, candidate, &pool[j]))
        .sum();
    total / idx.len() as f64
}

/// Scores a batch. Without a marker the composite is the generalization score alone.
#[allow(clippy::too_many_arguments)]
fn score_batch<R: Rng + ?Sized>(
    role: Role,
    candidates: &[Policy],
    pool: &[Policy],
    marker: Option<&Policy>,
    l: f64,
    dwam: &DwamParams,
    rho: f64,
    ev: &Evaluator,
    rng: &mut R,
) -> Vec<FitnessTriple> {
    candidates
        .iter()
        .map(|c| {
            let gen = eval_gen(role, c, pool, rho, ev, rng);
            match marker {
                Some(m) => FitnessTriple::evaluate(eval_base(role, c, m, ev), gen, l, dwam),
                None => FitnessTriple {
                    base: gen,
                    gen,
                    alpha: 0.0,
                    composite: gen,
                },
            }
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Per-player settings of the NES loop.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlayerSettings {
    pub nes: NesParams,
    pub aec: AecParams,
    pub dwam: DwamParams,
    pub marker: MarkerParams,
    pub controller: ControllerParams,
}

impl PlayerSettings {
    pub fn validate(&self) -> Result<()> {
        self.nes.validate()?;
        self.aec.validate()?;
        self.dwam.validate()?;
        self.marker.validate()?;
        self.controller.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlayerRuntime {
    pub role: Role,
    pub dist: SearchDistribution,
    pub marker_state: MarkerState,
    pub controller: ControllerState,
    pub aec: AecState,
    pub settings: PlayerSettings,
    /// False strips the governance layer (marker, DWAM, archive, controller).
    pub governance: bool,
}

impl PlayerRuntime {
    /// The initial published marker is the player's own starting mean.
    pub fn new(
        role: Role,
        theta0: Vec<f64>,
        settings: PlayerSettings,
        governance: bool,
    ) -> Result<Self> {
        settings.validate()?;
        Ok(Self {
            role,
            dist: SearchDistribution::new(theta0.clone(), settings.nes.sigma_init)?,
            marker_state: MarkerState::new(
                theta0,
                settings.marker.archive_capacity,
                settings.marker.rollback_horizon,
            ),
            controller: ControllerState::new(settings.controller.l_init),
            aec: AecState::new(settings.aec),
            settings,
            governance,
        })
    }

    /// Payoff queries one generation of this player costs against an opponent batch of
    /// `opp_population` candidates.
    pub fn generation_cost(&self, opp_population: usize, rho: f64) -> u64 {
        let n = self.settings.nes.population as u64;
        let k = opponent_count(opp_population, rho) as u64;
        let round = if self.governance { n * (1 + k) } else { n * k };
        let rounds = if self.settings.nes.extragradient {
            2
        } else {
            1
        };
        round * rounds + if self.governance { k } else { 0 }
    }
}

/// What one player did in one generation.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerStats {
    pub l: f64,
    pub alpha_mean: f64,
    pub sigma: f64,
    pub d_proxy: Option<f64>,
    pub fim: Option<f64>,
    pub gamma: f64,
    pub mu_f: f64,
    pub f_max: f64,
    /// Generalization score of the player's own marker (diagnostic only).
    pub g_marker: Option<f64>,
    pub elite_pushed: bool,
    pub rolled_back: bool,
    pub diagnostics: Option<ControllerDiagnostics>,
    pub fitness: Vec<FitnessTriple>,
}

#[allow(clippy::too_many_arguments)]
fn player_step<R: Rng + ?Sized>(
    p: &mut PlayerRuntime,
    batch: &PerturbationBatch,
    candidates: &[Vec<f64>],
    own: &[Policy],
    opp_pool: &[Policy],
    opp_marker: &Policy,
    ev: &Evaluator,
    rho: f64,
    rng: &mut R,
) -> Result<PlayerStats> {
    let s = p.settings;
    let l = p.controller.l;
    let role = p.role;
    let marker = p.governance.then_some(opp_marker);
    let fitness = score_batch(role, own, opp_pool, marker, l, &s.dwam, rho, ev, rng);
    let fs: Vec<f64> = fitness.iter().map(|f| f.composite).collect();
    let g = nes_gradient(&fs, batch, p.dist.sigma);

    let mut moved = if s.nes.extragradient {
        let mut regrad = |pred: &SearchDistribution| -> Vec<f64> {
            let b = sample_batch(pred, s.nes.population, s.nes.antithetic, rng)
                .expect("validated batch settings");
            let pols: Vec<Policy> = b.candidates(pred).iter().map(|c| ev.policy(c)).collect();
            let f: Vec<f64> = score_batch(role, &pols, opp_pool, marker, l, &s.dwam, rho, ev, rng)
                .iter()
                .map(|f| f.composite)
                .collect();
            nes_gradient(&f, &b, pred.sigma)
        };
        mean_update(&p.dist, &g, s.nes.eta_theta, Some(&mut regrad))
    } else {
        mean_update(&p.dist, &g, s.nes.eta_theta, None)
    };
    if s.nes.project_mean {
        ev.game().project_params(&mut moved.theta);
    }

    let mu_f = mean(&fs);
    let f_max = fs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let h = policy_entropy_normalized(&params_to_strategy(&moved.theta));
    let sigma = aec_step(&mut p.aec, mu_f, h, p.dist.sigma);
    p.dist = SearchDistribution {
        theta: moved.theta,
        sigma,
    };

    let mut stats = PlayerStats {
        l,
        alpha_mean: mean(&fitness.iter().map(|f| f.alpha).collect::<Vec<_>>()),
        sigma,
        d_proxy: None,
        fim: None,
        gamma: p.controller.gamma,
        mu_f,
        f_max,
        g_marker: None,
        elite_pushed: false,
        rolled_back: false,
        diagnostics: None,
        fitness,
    };
    if !p.governance {
        return Ok(stats);
    }

    let mut elite: Option<usize> = None;
    for (j, f) in stats.fitness.iter().enumerate() {
        if f.composite > l && elite.is_none_or(|e| f.gen > stats.fitness[e].gen) {
            elite = Some(j);
        }
    }
    if let Some(j) = elite {
        archive_push(&mut p.marker_state, candidates[j].clone());
        stats.elite_pushed = true;
    }

    let own_marker = ev.policy(&p.marker_state.marker);
    stats.g_marker = Some(eval_gen(role, &own_marker, opp_pool, rho, ev, rng));
    stats.rolled_back = rollback_step(&mut p.marker_state, f_max, l, rng);

    let b: Vec<f64> = stats.fitness.iter().map(|f| f.base).collect();
    let gs: Vec<f64> = stats.fitness.iter().map(|f| f.gen).collect();
    let inputs = ControllerInputs::at_threshold(&b, &gs, l, &s.dwam);
    let (next, diag) = controller_step(&p.controller, &s.controller, &inputs)?;
    p.controller = next;
    stats.l = next.l;
    stats.gamma = next.gamma;
    stats.d_proxy = Some(diag.d_val);
    stats.fim = Some(diag.fim);
    stats.diagnostics = Some(diag);
    Ok(stats)
}

/// One synchronous generation for both players. Each player reads the opponent's marker
/// and candidate batch as they stood at the start of the generation. `rng1` and `rng2`
/// drive player 1 and player 2 respectively.
pub fn mgm_e_nes_generation<R: Rng + ?Sized>(
    p1: &mut PlayerRuntime,
    p2: &mut PlayerRuntime,
    ev: &Evaluator,
    rho: f64,
    rng1: &mut R,
    rng2: &mut R,
) -> Result<[PlayerStats; 2]> {
    if p1.role != Role::Row || p2.role != Role::Col {
        return Err(Error::InvalidParameter(
            "player 1 must be the row player and player 2 the column player".into(),
        ));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "coevo.rho must lie in (0, 1], got {rho}"
        )));
    }
    let b1 = sample_batch(
        &p1.dist,
        p1.settings.nes.population,
        p1.settings.nes.antithetic,
        rng1,
    )?;
    let b2 = sample_batch(
        &p2.dist,
        p2.settings.nes.population,
        p2.settings.nes.antithetic,
        rng2,
    )?;
    let c1 = b1.candidates(&p1.dist);
    let c2 = b2.candidates(&p2.dist);
    let pol1: Vec<Policy> = c1.iter().map(|c| ev.policy(c)).collect();
    let pol2: Vec<Policy> = c2.iter().map(|c| ev.policy(c)).collect();
    let m1 = ev.policy(&p1.marker_state.marker);
    let m2 = ev.policy(&p2.marker_state.marker);

    let s1 = player_step(p1, &b1, &c1, &pol1, &pol2, &m2, ev, rho, rng1)?;
    let s2 = player_step(p2, &b2, &c2, &pol2, &pol1, &m1, ev, rho, rng2)?;
    Ok([s1, s2])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: u64,
    pub strategy: Vec<f64>,
}

/// GA settings for the population regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaParams {
    pub size: usize,
    pub elim_rate: f64,
    pub mutation_sigma: f64,
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    /// Fixed DWAM threshold on the raw payoff scale.
    pub l_u: f64,
    pub hof_capacity: usize,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            size: 100,
            elim_rate: 0.2,
            mutation_sigma: 0.05,
            mutation_rate: 0.1,
            crossover_rate: 1.0,
            l_u: -0.005,
            hof_capacity: 20,
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("ga.{m}")));
        if self.size < 2 {
            return bad("size must be >= 2");
        }
        if !(self.elim_rate > 0.0 && self.elim_rate <= 1.0) {
            return bad("elim_rate must lie in (0, 1]");
        }
        if !(self.mutation_sigma >= 0.0) {
            return bad("mutation_sigma must be nonnegative");
        }
        if !((0.0..=1.0).contains(&self.mutation_rate)
            && (0.0..=1.0).contains(&self.crossover_rate))
        {
            return bad("rates must lie in [0, 1]");
        }
        if !self.l_u.is_finite() {
            return bad("l_u must be finite");
        }
        Ok(())
    }

    /// Number eliminated and refilled per generation; at least one survivor is kept.
    pub fn n_eliminated(&self) -> usize {
        (((self.elim_rate * self.size as f64) - 1e-9).ceil() as usize).min(self.size - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationRuntime {
    pub role: Role,
    pub members: Vec<Individual>,
    pub keep_counts: KeepCounts,
    /// Marker this population plays against, a snapshot of an opponent member.
    pub marker_of_opponent: Option<Individual>,
    pub buffer_count: u32,
    pub hall_of_fame: VecDeque<Individual>,
    next_id: u64,
}

impl PopulationRuntime {
    pub fn from_strategies(role: Role, strategies: Vec<Vec<f64>>) -> Result<Self> {
        if strategies.len() < 2 {
            return Err(Error::InvalidParameter(
                "population needs at least 2 members".into(),
            ));
        }
        let members: Vec<Individual> = strategies
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                Ok(Individual {
                    id: i as u64,
                    strategy: MixedStrategy::new(s)?.into_inner(),
                })
            })
            .collect::<Result<_>>()?;
        let keep_counts = members.iter().map(|m| (m.id, 1)).collect();
        let next_id = members.len() as u64;
        Ok(Self {
            role,
            members,
            keep_counts,
            marker_of_opponent: None,
            buffer_count: 0,
            hall_of_fame: VecDeque::new(),
            next_id,
        })
    }

    /// Members drawn uniformly from the simplex (flat Dirichlet).
    pub fn random<R: Rng + ?Sized>(role: Role, size: usize, d: usize, rng: &mut R) -> Result<Self> {
        let strategies = (0..size)
            .map(|_| {
                let e: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(Exp1)).collect();
                let s: f64 = e.iter().sum();
                e.into_iter().map(|x| x / s).collect()
            })
            .collect();
        Self::from_strategies(role, strategies)
    }

    pub fn ids(&self) -> Vec<u64> {
        self.members.iter().map(|m| m.id).collect()
    }

    pub fn mean_strategy(&self) -> MixedStrategy {
        let items: Vec<MixedStrategy> = self
            .members
            .iter()
            .map(|m| MixedStrategy::from_raw(m.strategy.clone()))
            .collect();
        mean_strategy(&items).expect("population is nonempty")
    }

    fn policies(&self) -> Vec<Policy> {
        self.members
            .iter()
            .map(|m| Policy::Mixed(m.strategy.clone()))
            .collect()
    }
}

/// Each population's marker starts as the first member of the opposing population.
pub fn init_markers(a: &mut PopulationRuntime, b: &mut PopulationRuntime) {
    a.marker_of_opponent = Some(b.members[0].clone());
    b.marker_of_opponent = Some(a.members[0].clone());
}

/// Truncation selection then refill by blend crossover and Gaussian mutation, followed by
/// the KeepCount update. Returns the number replaced.
pub(crate) fn reproduce<R: Rng + ?Sized>(
    pop: &mut PopulationRuntime,
    fitness: &[f64],
    ga: &GaParams,
    rng: &mut R,
) -> usize {
    let n = pop.members.len();
    let n_elim = ga.n_eliminated().min(n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| fitness[j].total_cmp(&fitness[i]));
    let prev_ids = pop.ids();
    let survivors: Vec<Individual> = order[..n - n_elim]
        .iter()
        .map(|&i| pop.members[i].clone())
        .collect();

    let mut next = survivors.clone();
    for _ in 0..n_elim {
        let a = &survivors[rng.random_range(0..survivors.len())].strategy;
        let b = &survivors[rng.random_range(0..survivors.len())].strategy;
        let mut child: Vec<f64> = if rng.random::<f64>() < ga.crossover_rate {
            let u: f64 = rng.random();
            a.iter()
                .zip(b)
                .map(|(x, y)| u * x + (1.0 - u) * y)
                .collect()
        } else {
            a.clone()
        };
        if rng.random::<f64>() < ga.mutation_rate {
            for v in child.iter_mut() {
                *v += ga.mutation_sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
        next.push(Individual {
            id: pop.next_id,
            strategy: clip_normalize(&child),
        });
        pop.next_id += 1;
    }
    pop.members = next;
    pop.keep_counts = update_keep_counts(&prev_ids, &pop.ids(), &pop.keep_counts);
    n_elim
}

/// What one population did in one generation.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationStats {
    pub f_mean: f64,
    pub f_75: f64,
    pub alpha_mean: f64,
    pub marker_updated: bool,
    pub replaced: usize,
    pub fitness: Vec<FitnessTriple>,
}

/// Alg. 1 for `updater`: timing gate on its 75th-percentile fitness, then a persistence-
/// filtered marker choice among the current members of `opponent`.
fn marker_update(
    updater: &mut PopulationRuntime,
    opponent: &PopulationRuntime,
    f_updater: &[f64],
    f_opponent: &[f64],
    l_u: f64,
    mp: &MarkerParams,
) -> bool {
    let f75 = percentile(f_updater, 75.0).expect("nonempty fitness");
    updater.buffer_count = buffer_tick(f75, l_u, updater.buffer_count);
    if updater.buffer_count < mp.buffercount_threshold {
        return false;
    }
    let eligible: Vec<MarkerCandidate> = opponent
        .members
        .iter()
        .zip(f_opponent)
        .filter_map(|(m, &f)| {
            let kc = opponent.keep_counts.get(&m.id).copied().unwrap_or(1);
            (kc >= mp.keepcount_threshold).then_some(MarkerCandidate {
                id: m.id,
                keep_count: kc,
                fitness: f,
            })
        })
        .collect();
    match select_marker(&eligible) {
        Some(id) => {
            updater.marker_of_opponent = opponent.members.iter().find(|m| m.id == id).cloned();
            updater.buffer_count = 0;
            true
        }
        None => false,
    }
}

/// Payoff queries per generation for one population in the GA regime.
pub fn ga_generation_cost(size: usize, opp_size: usize, rho: f64, governance: bool) -> u64 {
    let k = opponent_count(opp_size, rho) as u64;
    size as u64 * (k + u64::from(governance))
}

/// One generation of the two-population GA. With `governance` the fitness is the DWAM
/// composite at the fixed threshold `ga.l_u` and markers follow Alg. 1; without it the
/// fitness is the generalization score alone and markers are ignored.
#[allow(clippy::too_many_arguments)]
pub fn ga_generation<R: Rng + ?Sized>(
    a: &mut PopulationRuntime,
    b: &mut PopulationRuntime,
    dwam: &DwamParams,
    mp: &MarkerParams,
    ga: &GaParams,
    rho: f64,
    governance: bool,
    ev: &Evaluator,
    rng: &mut R,
) -> Result<[PopulationStats; 2]> {
    if governance && (a.marker_of_opponent.is_none() || b.marker_of_opponent.is_none()) {
        init_markers(a, b);
    }
    let pa = a.policies();
    let pb = b.policies();
    let marker = |p: &PopulationRuntime| {
        governance.then(|| {
            Policy::Mixed(
                p.marker_of_opponent
                    .as_ref()
                    .expect("set above")
                    .strategy
                    .clone(),
            )
        })
    };
    let (ma, mb) = (marker(a), marker(b));
    let fa = score_batch(a.role, &pa, &pb, ma.as_ref(), ga.l_u, dwam, rho, ev, rng);
    let fb = score_batch(b.role, &pb, &pa, mb.as_ref(), ga.l_u, dwam, rho, ev, rng);
    let ca: Vec<f64> = fa.iter().map(|f| f.composite).collect();
    let cb: Vec<f64> = fb.iter().map(|f| f.composite).collect();

    let (mut ua, mut ub) = (false, false);
    if governance {
        ua = marker_update(a, b, &ca, &cb, ga.l_u, mp);
        ub = marker_update(b, a, &cb, &ca, ga.l_u, mp);
    }
    let ra = reproduce(a, &ca, ga, rng);
    let rb = reproduce(b, &cb, ga, rng);
    let stats = |f: Vec<FitnessTriple>, c: &[f64], updated, replaced| PopulationStats {
        f_mean: mean(c),
        f_75: percentile(c, 75.0).expect("nonempty"),
        alpha_mean: mean(&f.iter().map(|t| t.alpha).collect::<Vec<_>>()),
        marker_updated: updated,
        replaced,
        fitness: f,
    };
    Ok([stats(fa, &ca, ua, ra), stats(fb, &cb, ub, rb)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Game;
    use crate::games::{make_rps, make_stag_hunt};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rps3() -> Evaluator {
        Evaluator::new(Game::Matrix(make_rps(3, 1).unwrap()))
    }

    #[test]
    fn opponent_counts() {
        assert_eq!(opponent_count(100, 0.25), 25);
        assert_eq!(opponent_count(10, 1.0), 10);
        assert_eq!(opponent_count(10, 0.01), 1);
        assert_eq!(opponent_count(10, 0.3), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut idx = sample_opponents(100, 0.25, &mut rng);
        idx.sort();
        idx.dedup();
        assert_eq!(idx.len(), 25);
        let mut all = sample_opponents(7, 1.0, &mut rng);
        all.sort();
        assert_eq!(all, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn eval_examples() {
        let ev = rps3();
        let u = Policy::Mixed(vec![1.0 / 3.0; 3]);
        assert!(eval_base(Role::Row, &u, &u, &ev).abs() < 1e-15);
        let sh = Evaluator::new(Game::Matrix(make_stag_hunt()));
        let stag = Policy::Mixed(vec![1.0, 0.0]);
        assert_eq!(eval_base(Role::Row, &stag, &stag, &sh), 5.0);
        assert_eq!(eval_base(Role::Col, &stag, &stag, &sh), 5.0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pool = vec![stag.clone(); 6];
        assert_eq!(eval_gen(Role::Row, &stag, &pool, 0.5, &sh, &mut rng), 5.0);
    }

    #[test]
    fn eval_gen_full_pool_is_exact_mean() {
        let ev = rps3();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pool: Vec<Policy> = (0..10)
            .map(|_| {
                let v: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
                ev.policy(&v)
            })
            .collect();
        let cand = Policy::Mixed(vec![0.5, 0.3, 0.2]);
        let exact: f64 = pool.iter().map(|o| ev.payoff(&cand, o).0).sum::<f64>() / 10.0;
        let full = eval_gen(Role::Row, &cand, &pool, 1.0, &ev, &mut rng);
        assert!((full - exact).abs() < 1e-12);

        let reps = 20_000;
        let mc: f64 = (0..reps)
            .map(|_| eval_gen(Role::Row, &cand, &pool, 0.3, &ev, &mut rng))
            .sum::<f64>()
            / reps as f64;
        assert!((mc - exact).abs() < 5e-3, "mc {mc} exact {exact}");
    }

    fn player(role: Role, theta: Vec<f64>) -> PlayerRuntime {
        let mut s = PlayerSettings::default();
        s.nes.population = 10;
        PlayerRuntime::new(role, theta, s, true).unwrap()
    }

    #[test]
    fn generation_charges_closed_form() {
        let ev = rps3();
        let mut p1 = player(Role::Row, vec![0.5, 0.3, 0.2]);
        let mut p2 = player(Role::Col, vec![0.2, 0.3, 0.5]);
        let expected = p1.generation_cost(10, 0.25) + p2.generation_cost(10, 0.25);
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(2);
        mgm_e_nes_generation(&mut p1, &mut p2, &ev, 0.25, &mut r1, &mut r2).unwrap();
        assert_eq!(ev.queries(), expected);
        assert_eq!(expected, 2 * (10 * (1 + 3) + 3));
    }

    #[test]
    fn empty_elite_set_leaves_archive() {
        let ev = rps3();
        let mut p1 = player(Role::Row, vec![0.5, 0.3, 0.2]);
        let mut p2 = player(Role::Col, vec![0.2, 0.3, 0.5]);
        // RPS payoffs never exceed 1.
        p1.controller.l = 2.0;
        p2.controller.l = 2.0;
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(2);
        let [s1, s2] = mgm_e_nes_generation(&mut p1, &mut p2, &ev, 0.25, &mut r1, &mut r2).unwrap();
        assert!(!s1.elite_pushed && !s2.elite_pushed);
        assert!(p1.marker_state.archive.is_empty() && p2.marker_state.archive.is_empty());
    }

    #[test]
    fn wrong_roles_rejected() {
        let ev = rps3();
        let mut p1 = player(Role::Col, vec![0.5, 0.3, 0.2]);
        let mut p2 = player(Role::Col, vec![0.2, 0.3, 0.5]);
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(1);
        assert!(mgm_e_nes_generation(&mut p1, &mut p2, &ev, 0.25, &mut r, &mut r2).is_err());
    }

    fn pops(seed: u64, n: usize) -> (PopulationRuntime, PopulationRuntime, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = PopulationRuntime::random(Role::Row, n, 3, &mut rng).unwrap();
        let b = PopulationRuntime::random(Role::Col, n, 3, &mut rng).unwrap();
        (a, b, rng)
    }

    #[test]
    fn ga_replaces_worst_fifth() {
        let ev = rps3();
        let (mut a, mut b, mut rng) = pops(4, 100);
        let ga = GaParams::default();
        let [sa, sb] = ga_generation(
            &mut a,
            &mut b,
            &DwamParams::default(),
            &MarkerParams::default(),
            &ga,
            0.25,
            true,
            &ev,
            &mut rng,
        )
        .unwrap();
        assert_eq!((sa.replaced, sb.replaced), (20, 20));
        assert_eq!(a.members.len(), 100);
        assert_eq!(ev.queries(), 2 * ga_generation_cost(100, 100, 0.25, true));
        for m in a.members.iter().chain(&b.members) {
            assert!(MixedStrategy::new(m.strategy.clone()).is_ok());
        }
        let fresh = a.keep_counts.values().filter(|&&c| c == 1).count();
        assert_eq!(fresh, 20);
    }

    #[test]
    fn ga_without_variation_increments_keepcounts() {
        let ev = rps3();
        let (mut a, mut b, mut rng) = pops(5, 10);
        let ga = GaParams {
            size: 10,
            mutation_rate: 0.0,
            crossover_rate: 0.0,
            ..GaParams::default()
        };
        let survivors_before = a.ids();
        for _ in 0..3 {
            ga_generation(
                &mut a,
                &mut b,
                &DwamParams::default(),
                &MarkerParams::default(),
                &ga,
                0.5,
                true,
                &ev,
                &mut rng,
            )
            .unwrap();
        }
        for m in &a.members {
            let kc = a.keep_counts[&m.id];
            if survivors_before.contains(&m.id) {
                assert_eq!(kc, 4);
            } else {
                assert!((1..=3).contains(&kc));
            }
        }
    }
}
