//! Multi-seed experiment runner with payoff-query budgets, CSV logging and aggregation.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::baselines::{
    baseline_a_generation, fp_step, hall_of_fame_cost, hall_of_fame_generation,
    induced_matrix_game, mixture_cooperation, ogda_step, pure_nes_generation, FpState, OgdaState,
};
use crate::coevolution::{
    ga_generation, ga_generation_cost, init_markers, mgm_e_nes_generation, PlayerRuntime,
    PlayerStats, PopulationRuntime, PopulationStats,
};
use crate::config::{Algorithm, RunConfig};
use crate::controller::{ControllerDiagnostics, ControllerState};
use crate::env::{Evaluator, Game, Role};
use crate::error::{Error, Result};
use crate::games::{MatrixGame, MixedStrategy};
use crate::markov::StatePolicy;
use crate::metrics::{aggregate, AggregateBands, GenerationRecord, SCALAR_COLUMNS};

/// Exact CSV header of a per-seed log.
pub const CSV_HEADER: &str = "generation,evals_used,kl_p1,kl_p2,l_p1,l_p2,alpha_mean,sigma_p1,sigma_p2,d_proxy,fim,gamma,coop_rich,coop_poor,coop_collapsed,strategy_p1,strategy_p2";

const STREAM_INIT: u64 = 0;
const STREAM_P1: u64 = 1;
const STREAM_P2: u64 = 2;
const STREAM_POP: u64 = 3;

/// Generator for one `(seed, generation, stream)` triple; independent of scheduling.
pub fn derive_rng(seed: u64, generation: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(generation.wrapping_mul(8).wrapping_add(stream));
    rng
}

/// Draw initial parameters `center + sigma * z` for both players.
pub fn initial_params(cfg: &RunConfig, dim: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = derive_rng(seed, 0, STREAM_INIT);
    let sigma = cfg.init_sigma();
    let mut draw = || -> Vec<f64> {
        (0..dim)
            .map(|_| cfg.init.center + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let a = draw();
    let b = draw();
    (a, b)
}

// One learner per seed, so the variant size gap does not matter.
#[allow(clippy::large_enum_variant)]
enum Learner {
    Nes {
        p1: Box<PlayerRuntime>,
        p2: Box<PlayerRuntime>,
        last: Option<[PlayerStats; 2]>,
        history: [Vec<ControllerDiagnostics>; 2],
    },
    Fp {
        state: FpState,
        game: MatrixGame,
        resource: bool,
    },
    Ogda {
        state: OgdaState,
    },
    Pop {
        a: Box<PopulationRuntime>,
        b: Box<PopulationRuntime>,
        last: Option<[PopulationStats; 2]>,
    },
}

/// One seed's learner and evaluator.
pub struct Session {
    cfg: RunConfig,
    seed: u64,
    ev: Evaluator,
    learner: Learner,
    generation: u64,
}

fn mean2(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(0.5 * (x + y)),
        (x, None) => x,
        (None, y) => y,
    }
}

impl Session {
    pub fn new(cfg: &RunConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let game = cfg.game.build()?;
        let ev = Evaluator::new(game.clone());
        let dim = game.param_dim();
        let (mut t1, mut t2) = initial_params(cfg, dim, seed);
        if cfg.nes.project_mean {
            game.project_params(&mut t1);
            game.project_params(&mut t2);
        }
        let learner = match cfg.algorithm {
            Algorithm::MgmENes | Algorithm::PureNes => {
                let gov = cfg.algorithm == Algorithm::MgmENes;
                Learner::Nes {
                    p1: Box::new(PlayerRuntime::new(
                        Role::Row,
                        t1,
                        cfg.player_settings(1)?,
                        gov,
                    )?),
                    p2: Box::new(PlayerRuntime::new(
                        Role::Col,
                        t2,
                        cfg.player_settings(2)?,
                        gov,
                    )?),
                    last: None,
                    history: [Vec::new(), Vec::new()],
                }
            }
            Algorithm::Fp => match &game {
                Game::Matrix(g) => Learner::Fp {
                    state: FpState::new(g.dim()),
                    game: g.clone(),
                    resource: false,
                },
                Game::Resource(r) => Learner::Fp {
                    state: FpState::new(8),
                    game: induced_matrix_game(r, &ev)?,
                    resource: true,
                },
            },
            Algorithm::Ogda => Learner::Ogda {
                state: OgdaState::from_params(&game, &t1, &t2, cfg.ogda),
            },
            Algorithm::PopMgm | Algorithm::PopBaselineA | Algorithm::PopBaselineB => {
                let mut rng = derive_rng(seed, 0, STREAM_INIT);
                let mut a = PopulationRuntime::random(Role::Row, cfg.ga.size, dim, &mut rng)?;
                let mut b = PopulationRuntime::random(Role::Col, cfg.ga.size, dim, &mut rng)?;
                if cfg.algorithm == Algorithm::PopMgm {
                    init_markers(&mut a, &mut b);
                }
                Learner::Pop {
                    a: Box::new(a),
                    b: Box::new(b),
                    last: None,
                }
            }
        };
        Ok(Self {
            cfg: cfg.clone(),
            seed,
            ev,
            learner,
            generation: 0,
        })
    }

    pub fn evals_used(&self) -> u64 {
        self.ev.queries()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Payoff queries the next generation will consume.
    pub fn next_cost(&self) -> u64 {
        let rho = self.cfg.coevo.rho;
        match &self.learner {
            Learner::Nes { p1, p2, .. } => {
                p1.generation_cost(p2.settings.nes.population, rho)
                    + p2.generation_cost(p1.settings.nes.population, rho)
            }
            Learner::Fp { game, .. } => 2 * game.dim() as u64,
            Learner::Ogda { .. } => OgdaState::step_cost(self.ev.game()),
            Learner::Pop { a, b, .. } => match self.cfg.algorithm {
                Algorithm::PopMgm => {
                    ga_generation_cost(a.members.len(), b.members.len(), rho, true)
                        + ga_generation_cost(b.members.len(), a.members.len(), rho, true)
                }
                _ => {
                    hall_of_fame_cost(a.members.len(), b.members.len(), b.hall_of_fame.len(), rho)
                        + hall_of_fame_cost(
                            b.members.len(),
                            a.members.len(),
                            a.hall_of_fame.len(),
                            rho,
                        )
                }
            },
        }
    }

    pub fn step(&mut self) -> Result<()> {
        let g = self.generation + 1;
        let rho = self.cfg.coevo.rho;
        match &mut self.learner {
            Learner::Nes {
                p1,
                p2,
                last,
                history,
            } => {
                let mut r1 = derive_rng(self.seed, g, STREAM_P1);
                let mut r2 = derive_rng(self.seed, g, STREAM_P2);
                let stats = if p1.governance {
                    mgm_e_nes_generation(p1, p2, &self.ev, rho, &mut r1, &mut r2)?
                } else {
                    pure_nes_generation(p1, p2, &self.ev, rho, &mut r1, &mut r2)?
                };
                for (h, s) in history.iter_mut().zip(&stats) {
                    if let Some(d) = s.diagnostics {
                        h.push(d);
                    }
                }
                *last = Some(stats);
            }
            Learner::Fp { state, game, .. } => {
                fp_step(state, game, &self.ev);
            }
            Learner::Ogda { state } => ogda_step(state, &self.ev),
            Learner::Pop { a, b, last } => {
                let mut rng = derive_rng(self.seed, g, STREAM_POP);
                let cfg = &self.cfg;
                let stats = match cfg.algorithm {
                    Algorithm::PopMgm => ga_generation(
                        a,
                        b,
                        &cfg.dwam,
                        &cfg.marker,
                        &cfg.ga,
                        rho,
                        true,
                        &self.ev,
                        &mut rng,
                    )?,
                    Algorithm::PopBaselineA => {
                        baseline_a_generation(a, b, &cfg.ga, rho, &self.ev, &mut rng)?
                    }
                    _ => hall_of_fame_generation(
                        a,
                        b,
                        &cfg.ga,
                        cfg.ga.hof_capacity,
                        rho,
                        &self.ev,
                        &mut rng,
                    )?,
                };
                *last = Some(stats);
            }
        }
        self.generation = g;
        Ok(())
    }

    /// Whether the dynamic-equilibrium criterion holds for both players (governed NES only).
    pub fn dep_reached(&self) -> Option<bool> {
        match &self.learner {
            Learner::Nes { p1, history, .. } if p1.governance => Some(history.iter().all(|h| {
                crate::controller::dep_reached(h, self.cfg.dep.grad_tol, self.cfg.dep.window)
            })),
            _ => None,
        }
    }

    pub fn record(&self) -> GenerationRecord {
        let game = self.ev.game();
        let mut r = GenerationRecord {
            generation: self.generation,
            evals_used: self.ev.queries(),
            ..Default::default()
        };
        let (s1, s2): (Vec<f64>, Vec<f64>) = match &self.learner {
            Learner::Nes { p1, p2, last, .. } => {
                r.sigma_p1 = Some(p1.dist.sigma);
                r.sigma_p2 = Some(p2.dist.sigma);
                if p1.governance {
                    let c: [&ControllerState; 2] = [&p1.controller, &p2.controller];
                    r.l_p1 = Some(c[0].l);
                    r.l_p2 = Some(c[1].l);
                    r.gamma = Some(0.5 * (c[0].gamma + c[1].gamma));
                }
                if let Some([a, b]) = last {
                    if p1.governance {
                        r.alpha_mean = Some(0.5 * (a.alpha_mean + b.alpha_mean));
                    }
                    r.d_proxy = mean2(a.d_proxy, b.d_proxy);
                    r.fim = mean2(a.fim, b.fim);
                }
                (
                    self.ev.policy(&p1.dist.theta).values(),
                    self.ev.policy(&p2.dist.theta).values(),
                )
            }
            Learner::Fp {
                state, resource, ..
            } => {
                let (x, y) = state.empirical();
                if *resource {
                    (
                        mixture_cooperation(&x).to_vec(),
                        mixture_cooperation(&y).to_vec(),
                    )
                } else {
                    (x, y)
                }
            }
            Learner::Ogda { state } => (state.x.clone(), state.y.clone()),
            Learner::Pop { a, b, last } => {
                if self.cfg.algorithm == Algorithm::PopMgm {
                    r.l_p1 = Some(self.cfg.ga.l_u);
                    r.l_p2 = Some(self.cfg.ga.l_u);
                    if let Some([sa, sb]) = last {
                        r.alpha_mean = Some(0.5 * (sa.alpha_mean + sb.alpha_mean));
                    }
                }
                (
                    a.mean_strategy().into_inner(),
                    b.mean_strategy().into_inner(),
                )
            }
        };
        match game {
            Game::Matrix(_) => {
                r.kl_p1 = game.kl_to_target(Role::Row, &s1);
                r.kl_p2 = game.kl_to_target(Role::Col, &s2);
            }
            Game::Resource(_) => {
                let p = StatePolicy::from_params(&s1).to_array();
                let q = StatePolicy::from_params(&s2).to_array();
                r.coop_rich = Some(0.5 * (p[0] + q[0]));
                r.coop_poor = Some(0.5 * (p[1] + q[1]));
                r.coop_collapsed = Some(0.5 * (p[2] + q[2]));
            }
        }
        r.strategy_p1 = s1;
        r.strategy_p2 = s2;
        r
    }
}

/// Outcome of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub records: Vec<GenerationRecord>,
    pub dep_reached: Option<bool>,
}

/// Run one seed until the next generation would overrun the budget (or the generation
/// cap is hit). Logs generation 0, every `log_every`-th generation, and the last one.
pub fn run_seed(cfg: &RunConfig, seed: u64) -> Result<SeedRun> {
    let mut s = Session::new(cfg, seed)?;
    let mut records = vec![s.record()];
    loop {
        if cfg.max_generations.is_some_and(|m| s.generation() >= m) {
            break;
        }
        let cost = s.next_cost();
        if s.evals_used() + cost > cfg.eval_budget {
            break;
        }
        let before = s.evals_used();
        s.step()?;
        debug_assert_eq!(s.evals_used() - before, cost, "query accounting drifted");
        if s.generation() % cfg.log_every == 0 {
            records.push(s.record());
        }
    }
    if records.last().map(|r| r.generation) != Some(s.generation()) {
        records.push(s.record());
    }
    Ok(SeedRun {
        seed,
        records,
        dep_reached: s.dep_reached(),
    })
}

/// All seeds of `cfg`, in seed order, on `parallelism` worker threads.
pub fn run_experiment(cfg: &RunConfig, parallelism: usize) -> Result<Vec<SeedRun>> {
    run_seeds(cfg, parallelism)?.into_iter().collect()
}

fn run_seeds(cfg: &RunConfig, parallelism: usize) -> Result<Vec<Result<SeedRun>>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(|| cfg.seeds.par_iter().map(|&s| run_seed(cfg, s)).collect()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

pub fn write_records(path: &Path, records: &[GenerationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER.split(','))?;
    for r in records {
        let mut row = vec![r.generation.to_string(), r.evals_used.to_string()];
        row.extend(r.scalars().iter().map(|v| fmt_opt(*v)));
        row.push(fmt_vec(&r.strategy_p1));
        row.push(fmt_vec(&r.strategy_p2));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<GenerationRecord>> {
    let mut rd = csv::Reader::from_path(path)?;
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Misaligned(format!(
            "{}: unexpected CSV header",
            path.display()
        )));
    }
    let bad = |what: &str| Error::Misaligned(format!("{}: cannot parse {what}", path.display()));
    let opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| bad(s))
        }
    };
    let vec = |s: &str| -> Result<Vec<f64>> {
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(';')
            .map(|x| x.parse().map_err(|_| bad(x)))
            .collect()
    };
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let f = |i: usize| row.get(i).unwrap_or("");
        let sc: Vec<Option<f64>> = (2..15).map(|i| opt(f(i))).collect::<Result<_>>()?;
        out.push(GenerationRecord {
            generation: f(0).parse().map_err(|_| bad("generation"))?,
            evals_used: f(1).parse().map_err(|_| bad("evals_used"))?,
            kl_p1: sc[0],
            kl_p2: sc[1],
            l_p1: sc[2],
            l_p2: sc[3],
            alpha_mean: sc[4],
            sigma_p1: sc[5],
            sigma_p2: sc[6],
            d_proxy: sc[7],
            fim: sc[8],
            gamma: sc[9],
            coop_rich: sc[10],
            coop_poor: sc[11],
            coop_collapsed: sc[12],
            strategy_p1: vec(f(15))?,
            strategy_p2: vec(f(16))?,
        });
    }
    Ok(out)
}

pub fn write_aggregate(path: &Path, bands: &AggregateBands) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["generation".to_string(), "evals_used".to_string()];
    for c in SCALAR_COLUMNS {
        for s in ["mean", "p5", "p25", "p50", "p75", "p95"] {
            header.push(format!("{c}_{s}"));
        }
    }
    w.write_record(&header)?;
    for row in &bands.rows {
        let mut out = vec![row.generation.to_string(), row.evals_used.to_string()];
        for b in &row.bands {
            match b {
                Some(b) => out.extend(
                    [b.mean, b.p5, b.p25, b.p50, b.p75, b.p95]
                        .iter()
                        .map(f64::to_string),
                ),
                None => out.extend(std::iter::repeat_n(String::new(), 6)),
            }
        }
        w.write_record(&out)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn seed_csv_name(seed: u64) -> String {
    format!("seed_{seed}.csv")
}

/// Seed CSVs in `dir`, sorted by seed.
pub fn seed_csvs(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(seed) = name
            .strip_prefix("seed_")
            .and_then(|s| s.strip_suffix(".csv"))
            .and_then(|s| s.parse::<u64>().ok())
        {
            out.push((seed, path));
        }
    }
    out.sort();
    Ok(out)
}

/// Rebuild `aggregate.csv` from the seed CSVs in `dir`. Errors when there are none.
pub fn aggregate_dir(dir: &Path) -> Result<PathBuf> {
    let files = seed_csvs(dir)?;
    if files.is_empty() {
        return Err(Error::Empty("seed CSVs"));
    }
    let streams: Vec<Vec<GenerationRecord>> = files
        .iter()
        .map(|(_, p)| read_records(p))
        .collect::<Result<_>>()?;
    let bands = aggregate(&streams)?;
    let out = dir.join("aggregate.csv");
    write_aggregate(&out, &bands)?;
    Ok(out)
}

/// Where a run's files went and which seeds failed.
#[derive(Debug)]
pub struct SweepOutput {
    pub dir: PathBuf,
    pub runs: Vec<SeedRun>,
    pub failures: Vec<(u64, Error)>,
}

/// Run every seed, write `<outdir>/<run_id>/seed_<n>.csv` and `config.json`, then
/// aggregate the successful seeds.
pub fn run_and_write(cfg: &RunConfig, outdir: &Path, parallelism: usize) -> Result<SweepOutput> {
    let mut snapshot = cfg.clone();
    snapshot.run_id = Some(cfg.resolved_run_id());
    let dir = outdir.join(snapshot.run_id.as_deref().expect("set above"));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let cfg_path = dir.join("config.json");
    fs::write(&cfg_path, snapshot.to_json_pretty() + "\n").map_err(|e| Error::io(&cfg_path, e))?;

    let results = run_seeds(cfg, parallelism)?;
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (seed, res) in cfg.seeds.iter().zip(results) {
        match res.and_then(|run| {
            write_records(&dir.join(seed_csv_name(*seed)), &run.records).map(|_| run)
        }) {
            Ok(run) => runs.push(run),
            Err(e) => failures.push((*seed, e)),
        }
    }
    if !runs.is_empty() {
        let streams: Vec<Vec<GenerationRecord>> = runs.iter().map(|r| r.records.clone()).collect();
        write_aggregate(&dir.join("aggregate.csv"), &aggregate(&streams)?)?;
    }
    Ok(SweepOutput {
        dir,
        runs,
        failures,
    })
}

/// Mean-player KL of a record, or NaN when absent.
pub fn final_kl(run: &SeedRun) -> f64 {
    run.records
        .last()
        .and_then(GenerationRecord::kl_mean)
        .unwrap_or(f64::NAN)
}

/// Reported strategy of a record as a simplex vector (matrix games).
pub fn record_strategies(r: &GenerationRecord) -> (MixedStrategy, MixedStrategy) {
    (
        MixedStrategy::from_raw(r.strategy_p1.clone()),
        MixedStrategy::from_raw(r.strategy_p2.clone()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(extra: &[&str]) -> RunConfig {
        let base = "algorithm = \"mgm_e_nes\"\neval_budget = 2000\n[game]\nid = \"rps\"\nd = 3\n";
        let o: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
        RunConfig::from_str_with(base, false, &o).unwrap()
    }

    #[test]
    fn tiny_budget_gives_single_record() {
        let c = cfg(&["eval_budget=5"]);
        let run = run_seed(&c, 0).unwrap();
        assert_eq!(run.records.len(), 1);
        assert_eq!(run.records[0].generation, 0);
        assert_eq!(run.records[0].evals_used, 0);
    }

    #[test]
    fn budget_respected_and_logged() {
        let c = cfg(&["nes.population=10", "log_every=3"]);
        let run = run_seed(&c, 1).unwrap();
        let last = run.records.last().unwrap();
        assert!(last.evals_used <= 2000);
        let per_gen = Session::new(&c, 1).unwrap().next_cost();
        assert!(last.evals_used + per_gen > 2000);
        for w in run.records.windows(2) {
            assert!(w[0].evals_used <= w[1].evals_used);
        }
        let gens: Vec<u64> = run.records.iter().map(|r| r.generation).collect();
        assert!(gens[..gens.len() - 1].iter().all(|g| g % 3 == 0));
    }

    #[test]
    fn derive_rng_streams_differ() {
        let a: u64 = derive_rng(1, 2, 1).random();
        let b: u64 = derive_rng(1, 2, 2).random();
        let c: u64 = derive_rng(1, 2, 1).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(&["nes.population=10"]);
        let run = run_seed(&c, 2).unwrap();
        let p = dir.path().join("seed_2.csv");
        write_records(&p, &run.records).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(read_records(&p).unwrap(), run.records);
    }
}
