//! Run configuration: TOML or JSON files, dotted `key=value` overrides, validation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::OgdaParams;
use crate::coevolution::{GaParams, PlayerSettings};
use crate::controller::ControllerParams;
use crate::env::Game;
use crate::error::{Error, Result};
use crate::games::{
    default_rps_bandwidth, make_battle_of_sexes_with, make_rps, make_stag_hunt, MatrixGame,
};
use crate::governance::{DwamParams, MarkerParams};
use crate::markov::{ResourceGame, DEFAULT_TREMBLE};
use crate::nes::{AecParams, NesParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum GameSpec {
    Rps {
        d: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bandwidth: Option<usize>,
    },
    StagHunt,
    BattleOfSexes {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        payoff_p1: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        payoff_p2: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        target_action: usize,
    },
    MarkovResource {
        #[serde(default = "default_tremble")]
        eps: f64,
    },
}

fn default_tremble() -> f64 {
    DEFAULT_TREMBLE
}

impl GameSpec {
    pub fn build(&self) -> Result<Game> {
        Ok(match self {
            GameSpec::Rps { d, bandwidth } => Game::Matrix(make_rps(
                *d,
                bandwidth.unwrap_or_else(|| default_rps_bandwidth(*d)),
            )?),
            GameSpec::StagHunt => Game::Matrix(make_stag_hunt()),
            GameSpec::BattleOfSexes {
                payoff_p1,
                payoff_p2,
                target_action,
            } => {
                let p1 = payoff_p1
                    .clone()
                    .unwrap_or_else(|| vec![vec![2.0, 0.0], vec![0.0, 1.0]]);
                let p2 = payoff_p2
                    .clone()
                    .unwrap_or_else(|| vec![vec![1.0, 0.0], vec![0.0, 2.0]]);
                Game::Matrix(make_battle_of_sexes_with(p1, p2, *target_action)?)
            }
            GameSpec::MarkovResource { eps } => {
                if !(0.0..=1.0).contains(eps) {
                    return Err(Error::InvalidGame(format!(
                        "tremble eps must lie in [0, 1], got {eps}"
                    )));
                }
                Game::Resource(ResourceGame::with_tremble(*eps))
            }
        })
    }

    pub fn matrix(&self) -> Result<Option<MatrixGame>> {
        Ok(match self.build()? {
            Game::Matrix(g) => Some(g),
            Game::Resource(_) => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    MgmENes,
    PureNes,
    Fp,
    Ogda,
    PopMgm,
    PopBaselineA,
    PopBaselineB,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::MgmENes,
        Algorithm::PureNes,
        Algorithm::Fp,
        Algorithm::Ogda,
        Algorithm::PopMgm,
        Algorithm::PopBaselineA,
        Algorithm::PopBaselineB,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Algorithm::MgmENes => "mgm_e_nes",
            Algorithm::PureNes => "pure_nes",
            Algorithm::Fp => "fp",
            Algorithm::Ogda => "ogda",
            Algorithm::PopMgm => "pop_mgm",
            Algorithm::PopBaselineA => "pop_baseline_a",
            Algorithm::PopBaselineB => "pop_baseline_b",
        }
    }

    pub fn is_population(self) -> bool {
        matches!(
            self,
            Algorithm::PopMgm | Algorithm::PopBaselineA | Algorithm::PopBaselineB
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    MgmENes,
    PopulationGa,
}

/// Initial policy parameters: `center + sigma * N(0, 1)` per coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitParams {
    /// Defaults to 0.5 for 3-action RPS and 0.15 otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub center: f64,
}

impl Default for InitParams {
    fn default() -> Self {
        Self {
            sigma: None,
            center: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoevoParams {
    pub rho: f64,
}

impl Default for CoevoParams {
    fn default() -> Self {
        Self { rho: 0.25 }
    }
}

/// Dynamic-equilibrium detection window over the controller diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepParams {
    pub grad_tol: f64,
    pub window: usize,
}

impl Default for DepParams {
    fn default() -> Self {
        Self {
            grad_tol: 1e-2,
            window: 20,
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_log_every() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    pub algorithm: Algorithm,
    pub game: GameSpec,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Payoff-query budget per seed.
    pub eval_budget: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_generations: Option<u64>,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    #[serde(default)]
    pub init: InitParams,
    #[serde(default)]
    pub nes: NesParams,
    #[serde(default)]
    pub aec: AecParams,
    #[serde(default)]
    pub dwam: DwamParams,
    #[serde(default)]
    pub marker: MarkerParams,
    #[serde(default)]
    pub controller: ControllerParams,
    #[serde(default)]
    pub coevo: CoevoParams,
    #[serde(default)]
    pub ga: GaParams,
    #[serde(default)]
    pub ogda: OgdaParams,
    #[serde(default)]
    pub dep: DepParams,
    /// Partial overrides of the nes/aec/dwam/marker/controller sections for one player.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub player1: Option<toml::Table>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub player2: Option<toml::Table>,
}

impl RunConfig {
    /// Read a `.json` or TOML file, apply dotted overrides, then validate.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::ConfigRead {
            path: path.to_path_buf(),
            source,
        })?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::from_str_with(&text, is_json, overrides)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_str_with(text: &str, json: bool, overrides: &[String]) -> Result<Self> {
        let mut value: toml::Value = if json {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str::<toml::Table>(text)
                .map(toml::Value::Table)
                .map_err(|e| Error::Config(e.to_string()))?
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig = value
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.eval_budget == 0 {
            return cfg("eval_budget must be positive".into());
        }
        if self.seeds.is_empty() {
            return cfg("seeds must be nonempty".into());
        }
        if self.log_every == 0 {
            return cfg("log_every must be >= 1".into());
        }
        if let Some(mode) = self.mode {
            let expected = if self.algorithm.is_population() {
                Mode::PopulationGa
            } else {
                Mode::MgmENes
            };
            if mode != expected {
                return cfg(format!(
                    "mode {mode:?} does not match algorithm {}",
                    self.algorithm.id()
                ));
            }
        }
        if !(self.coevo.rho > 0.0 && self.coevo.rho <= 1.0) {
            return cfg(format!(
                "coevo.rho must lie in (0, 1], got {}",
                self.coevo.rho
            ));
        }
        if let Some(s) = self.init.sigma {
            if !(s >= 0.0) {
                return cfg("init.sigma must be nonnegative".into());
            }
        }
        if !self.init.center.is_finite() {
            return cfg("init.center must be finite".into());
        }
        let game = self.game.build()?;
        self.player_settings(1)?;
        self.player_settings(2)?;
        self.ga.validate()?;
        self.ogda.validate()?;
        if self.algorithm.is_population() && !matches!(game, Game::Matrix(_)) {
            return cfg("population algorithms need a matrix game".into());
        }
        Ok(())
    }

    /// Shared sections merged with the `player1` / `player2` overrides.
    pub fn player_settings(&self, player: u8) -> Result<PlayerSettings> {
        let base = PlayerSettings {
            nes: self.nes,
            aec: self.aec,
            dwam: self.dwam,
            marker: self.marker,
            controller: self.controller,
        };
        let over = match player {
            1 => self.player1.as_ref(),
            2 => self.player2.as_ref(),
            _ => return Err(Error::InvalidParameter(format!("no player {player}"))),
        };
        let settings = match over {
            None => base,
            Some(t) => {
                let mut v =
                    toml::Value::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
                merge(&mut v, &toml::Value::Table(t.clone()));
                v.try_into()
                    .map_err(|e: toml::de::Error| Error::Config(format!("player{player}: {e}")))?
            }
        };
        settings.validate()?;
        Ok(settings)
    }

    /// Spread of the initial parameter draw.
    pub fn init_sigma(&self) -> f64 {
        self.init.sigma.unwrap_or(match self.game {
            GameSpec::Rps { d: 3, .. } => 0.5,
            _ => 0.15,
        })
    }

    /// The config without its run id, as JSON.
    fn identity_json(&self) -> String {
        let mut c = self.clone();
        c.run_id = None;
        serde_json::to_string(&c).expect("config serializes")
    }

    /// Explicit run id, or a content hash of the config and seed set.
    pub fn resolved_run_id(&self) -> String {
        use sha2::{Digest, Sha256};
        if let Some(id) = &self.run_id {
            return id.clone();
        }
        let digest = Sha256::digest(self.identity_json().as_bytes());
        format!("{}-{}", self.algorithm.id(), &hex::encode(digest)[..12])
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn merge(dst: &mut toml::Value, src: &toml::Value) {
    match (dst, src) {
        (toml::Value::Table(d), toml::Value::Table(s)) => {
            for (k, v) in s {
                match d.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        d.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (d, s) => *d = s.clone(),
    }
}

/// Parse the right-hand side of `key=value` as a TOML value, falling back to a string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Set a dotted path such as `controller.eta_l=0`, creating tables as needed.
pub fn apply_override(root: &mut toml::Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key `{key}` is malformed")));
    }
    let mut cur = root;
    for p in &parts[..parts.len() - 1] {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}` descends into a non-table")))?;
        cur = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = cur
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("override `{key}` descends into a non-table")))?;
    table.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}
