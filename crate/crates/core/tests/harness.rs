use std::fs;
use std::path::{Path, PathBuf};

use mgm_core::harness::{aggregate_dir, read_records, run_and_write, seed_csv_name, CSV_HEADER};
use mgm_core::{run_experiment, run_seed, RunConfig};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn small(alg: &str, game: &str, budget: u64) -> RunConfig {
    let text = format!(
        "algorithm = \"{alg}\"\nseeds = [0, 1, 2]\neval_budget = {budget}\n\n[game]\n{game}\n\n[nes]\npopulation = 8\n\n[controller]\ntau = 0.3\n\n[ga]\nsize = 20\n"
    );
    RunConfig::from_str_with(&text, false, &[]).unwrap()
}

#[test]
fn shipped_configs_load() {
    let mut n = 0;
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg =
                RunConfig::load(&path, &[]).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.validate().unwrap();
            n += 1;
        }
    }
    assert!(n >= 9, "only {n} configs found");
}

#[test]
fn frozen_threshold_stays_put() {
    let cfg = RunConfig::load(
        &configs_dir().join("rps3.toml"),
        &[
            "controller.eta_l=0".into(),
            "controller.l_init=0.25".into(),
            "eval_budget=4000".into(),
        ],
    )
    .unwrap();
    let run = run_seed(&cfg, 3).unwrap();
    assert!(run.records.len() > 5);
    for r in &run.records[1..] {
        assert_eq!(r.l_p1, Some(0.25));
        assert_eq!(r.l_p2, Some(0.25));
    }
}

#[test]
fn budget_is_never_exceeded() {
    for (alg, game) in [
        ("mgm_e_nes", "id = \"stag_hunt\""),
        ("pure_nes", "id = \"battle_of_sexes\""),
        ("fp", "id = \"markov_resource\""),
        ("ogda", "id = \"rps\"\nd = 3"),
        ("pop_mgm", "id = \"rps\"\nd = 3"),
        ("pop_baseline_b", "id = \"rps\"\nd = 3"),
    ] {
        let cfg = small(alg, game, 3000);
        let run = run_seed(&cfg, 0).unwrap();
        let last = run.records.last().unwrap();
        assert!(last.evals_used <= 3000, "{alg}: {}", last.evals_used);
        assert!(last.generation > 0, "{alg} made no progress");
        assert!(run
            .records
            .windows(2)
            .all(|w| w[0].evals_used < w[1].evals_used));
    }
}

#[test]
fn parallelism_does_not_change_results() {
    let cfg = small("mgm_e_nes", "id = \"rps\"\nd = 3", 3000);
    let a = run_experiment(&cfg, 1).unwrap();
    let b = run_experiment(&cfg, 4).unwrap();
    assert_eq!(a.len(), 3);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.seed, y.seed);
        assert_eq!(x.records, y.records);
    }
}

#[test]
fn sweep_writes_identical_bytes_across_parallelism() {
    let cfg = small("mgm_e_nes", "id = \"markov_resource\"", 3000);
    let d1 = tempfile::tempdir().unwrap();
    let d4 = tempfile::tempdir().unwrap();
    let o1 = run_and_write(&cfg, d1.path(), 1).unwrap();
    let o4 = run_and_write(&cfg, d4.path(), 4).unwrap();
    for name in [
        "config.json",
        "aggregate.csv",
        "seed_0.csv",
        "seed_1.csv",
        "seed_2.csv",
    ] {
        assert_eq!(
            fs::read(o1.dir.join(name)).unwrap(),
            fs::read(o4.dir.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn snapshot_reloads_to_same_run() {
    let cfg = small("pure_nes", "id = \"stag_hunt\"", 2000);
    let dir = tempfile::tempdir().unwrap();
    let out = run_and_write(&cfg, dir.path(), 2).unwrap();
    assert!(out.dir.ends_with(cfg.resolved_run_id()));
    let back = RunConfig::load(&out.dir.join("config.json"), &[]).unwrap();
    assert_eq!(back.resolved_run_id(), cfg.resolved_run_id());
    let rerun = run_seed(&back, 1).unwrap();
    assert_eq!(
        rerun.records,
        read_records(&out.dir.join(seed_csv_name(1))).unwrap()
    );
}

#[test]
fn aggregate_is_idempotent() {
    let cfg = small("ogda", "id = \"rps\"\nd = 3", 2000);
    let dir = tempfile::tempdir().unwrap();
    let out = run_and_write(&cfg, dir.path(), 1).unwrap();
    let first = fs::read(out.dir.join("aggregate.csv")).unwrap();
    aggregate_dir(&out.dir).unwrap();
    assert_eq!(fs::read(out.dir.join("aggregate.csv")).unwrap(), first);
    let seed_csv = fs::read_to_string(out.dir.join("seed_0.csv")).unwrap();
    assert_eq!(seed_csv.lines().next().unwrap(), CSV_HEADER);
}
