//! Uniform view over matrix games and the resource game, with payoff-query accounting.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::games::{clip_normalize, MatrixGame, MixedStrategy, PARAM_FLOOR};
use crate::markov::{ResourceGame, StatePolicy};
use crate::metrics::kl_divergence;

#[derive(Debug, Clone, PartialEq)]
pub enum Game {
    Matrix(MatrixGame),
    Resource(ResourceGame),
}

/// A policy in the form the game consumes.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Mixed(Vec<f64>),
    State(StatePolicy),
}

impl Policy {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Policy::Mixed(p) => p.clone(),
            Policy::State(s) => s.to_array().to_vec(),
        }
    }
}

/// Which side of the bimatrix a player occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Role {
    Row,
    Col,
}

impl Role {
    pub fn index(self) -> usize {
        match self {
            Role::Row => 0,
            Role::Col => 1,
        }
    }

    pub fn other(self) -> Role {
        match self {
            Role::Row => Role::Col,
            Role::Col => Role::Row,
        }
    }
}

impl Game {
    /// Length of the policy parameter vector.
    pub fn param_dim(&self) -> usize {
        match self {
            Game::Matrix(g) => g.dim(),
            Game::Resource(_) => 3,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Game::Matrix(g) => g.name(),
            Game::Resource(_) => "markov_resource",
        }
    }

    /// Map raw parameters to a policy: clip-and-normalize for matrix games, box clip for
    /// the resource game.
    pub fn policy(&self, theta: &[f64]) -> Policy {
        match self {
            Game::Matrix(_) => Policy::Mixed(clip_normalize(theta)),
            Game::Resource(_) => Policy::State(StatePolicy::from_params(theta)),
        }
    }

    /// Clamp parameters into the box the policy map reads. The policy is unchanged, but a mean
    /// parked far outside the box would otherwise see flat fitness and stop moving.
    pub fn project_params(&self, theta: &mut [f64]) {
        let (lo, hi) = match self {
            Game::Matrix(_) => (PARAM_FLOOR, 1.0),
            Game::Resource(_) => (0.0, 1.0),
        };
        for t in theta.iter_mut() {
            *t = if t.is_nan() { lo } else { t.clamp(lo, hi) };
        }
    }

    /// KL of a reported strategy to the player's equilibrium target, when the game has one.
    pub fn kl_to_target(&self, role: Role, strategy: &[f64]) -> Option<f64> {
        match self {
            Game::Matrix(g) => g.nash_target().map(|(t1, t2)| {
                let t = if role == Role::Row { t1 } else { t2 };
                kl_divergence(&MixedStrategy::from_raw(strategy.to_vec()), t, 1e-12)
                    .unwrap_or(f64::NAN)
            }),
            Game::Resource(_) => None,
        }
    }
}

/// A game plus a counter of payoff queries (one per pairwise evaluation).
#[derive(Debug)]
pub struct Evaluator {
    game: Game,
    queries: AtomicU64,
}

impl Clone for Evaluator {
    fn clone(&self) -> Self {
        Self {
            game: self.game.clone(),
            queries: AtomicU64::new(self.queries()),
        }
    }
}

impl Evaluator {
    pub fn new(game: Game) -> Self {
        Self {
            game,
            queries: AtomicU64::new(0),
        }
    }

    pub fn game(&self) -> &Game {
        &self.game
    }

    pub fn queries(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    pub fn policy(&self, theta: &[f64]) -> Policy {
        self.game.policy(theta)
    }

    /// `(u1, u2)` for a row policy against a column policy. Counts one query.
    pub fn payoff(&self, row: &Policy, col: &Policy) -> (f64, f64) {
        self.queries.fetch_add(1, Ordering::Relaxed);
        match (&self.game, row, col) {
            (Game::Matrix(g), Policy::Mixed(x), Policy::Mixed(y)) => g.bilinear(x, y),
            (Game::Resource(g), Policy::State(p), Policy::State(q)) => g.score(p, q),
            _ => panic!("policy kind does not match the game"),
        }
    }

    /// Payoff to the player in `role` when it plays `own` against `opp`.
    pub fn payoff_for(&self, role: Role, own: &Policy, opp: &Policy) -> f64 {
        match role {
            Role::Row => self.payoff(own, opp).0,
            Role::Col => self.payoff(opp, own).1,
        }
    }

    /// Charge queries performed outside `payoff` (e.g. pure-action sweeps of a matrix row).
    pub fn charge(&self, n: u64) {
        self.queries.fetch_add(n, Ordering::Relaxed);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::make_rps;
    use crate::markov::ResourceGame;

    #[test]
    fn projection_keeps_the_policy() {
        let g = Game::Matrix(make_rps(3, 1).unwrap());
        let raw = vec![2.5, -0.4, 0.7];
        let mut t = raw.clone();
        g.project_params(&mut t);
        assert_eq!(t, vec![1.0, PARAM_FLOOR, 0.7]);
        assert_eq!(g.policy(&t), g.policy(&raw));

        let r = Game::Resource(ResourceGame::default());
        let mut t = vec![1.3, f64::NAN, -2.0];
        r.project_params(&mut t);
        assert_eq!(t, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn evaluator_counts_queries() {
        let ev = Evaluator::new(Game::Matrix(make_rps(3, 1).unwrap()));
        let u = ev.policy(&[1.0, 1.0, 1.0]);
        ev.payoff(&u, &u);
        ev.payoff_for(Role::Col, &u, &u);
        ev.charge(5);
        assert_eq!(ev.queries(), 7);
    }
}
