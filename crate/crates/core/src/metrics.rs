//! KL-to-equilibrium metric, per-generation records and percentile aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::MixedStrategy;

pub const KL_FLOOR: f64 = 1e-12;

/// `KL(p || q)` in nats. Both inputs are floored at `floor` and renormalized first, so
/// `KL(p || p)` is exactly zero.
pub fn kl_divergence(p: &MixedStrategy, q: &MixedStrategy, floor: f64) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            got: p.dim(),
        });
    }
    let prep = |v: &[f64]| -> Vec<f64> {
        let f: Vec<f64> = v.iter().map(|x| x.max(floor)).collect();
        let s: f64 = f.iter().sum();
        f.into_iter().map(|x| x / s).collect()
    };
    let (a, b) = (prep(p.probs()), prep(q.probs()));
    if a == b {
        return Ok(0.0);
    }
    let kl: f64 = a.iter().zip(&b).map(|(x, y)| x * (x / y).ln()).sum();
    Ok(kl.max(0.0))
}

pub fn mean_strategy(items: &[MixedStrategy]) -> Result<MixedStrategy> {
    let first = items.first().ok_or(Error::Empty("strategies"))?;
    let d = first.dim();
    let mut acc = vec![0.0; d];
    for s in items {
        if s.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: s.dim(),
            });
        }
        for (a, p) in acc.iter_mut().zip(s.probs()) {
            *a += p;
        }
    }
    let n = items.len() as f64;
    Ok(MixedStrategy::from_raw(
        acc.into_iter().map(|a| a / n).collect(),
    ))
}

/// Percentile with linear interpolation between order statistics (inclusive method):
/// rank `p / 100 * (n - 1)` in the sorted sample.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(percentile_sorted(&v, p))
}

fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let rank = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// One logged generation. Optional fields are absent when the algorithm or game has no
/// such quantity (no threshold for FP, no cooperation for matrix games, ...).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: u64,
    pub evals_used: u64,
    pub kl_p1: Option<f64>,
    pub kl_p2: Option<f64>,
    pub l_p1: Option<f64>,
    pub l_p2: Option<f64>,
    pub alpha_mean: Option<f64>,
    pub sigma_p1: Option<f64>,
    pub sigma_p2: Option<f64>,
    pub d_proxy: Option<f64>,
    pub fim: Option<f64>,
    pub gamma: Option<f64>,
    pub coop_rich: Option<f64>,
    pub coop_poor: Option<f64>,
    pub coop_collapsed: Option<f64>,
    pub strategy_p1: Vec<f64>,
    pub strategy_p2: Vec<f64>,
}

/// Names of the scalar columns, in CSV order.
pub const SCALAR_COLUMNS: [&str; 13] = [
    "kl_p1",
    "kl_p2",
    "l_p1",
    "l_p2",
    "alpha_mean",
    "sigma_p1",
    "sigma_p2",
    "d_proxy",
    "fim",
    "gamma",
    "coop_rich",
    "coop_poor",
    "coop_collapsed",
];

impl GenerationRecord {
    pub fn scalars(&self) -> [Option<f64>; 13] {
        [
            self.kl_p1,
            self.kl_p2,
            self.l_p1,
            self.l_p2,
            self.alpha_mean,
            self.sigma_p1,
            self.sigma_p2,
            self.d_proxy,
            self.fim,
            self.gamma,
            self.coop_rich,
            self.coop_poor,
            self.coop_collapsed,
        ]
    }

    /// Mean of the two players' KL values, when both are present.
    pub fn kl_mean(&self) -> Option<f64> {
        Some(0.5 * (self.kl_p1? + self.kl_p2?))
    }
}

/// Final minus initial mean-player KL. Zero for streams without a KL signal.
pub fn kl_reduction(stream: &[GenerationRecord]) -> Result<f64> {
    let first = stream.first().ok_or(Error::Empty("record stream"))?;
    let last = stream.last().expect("nonempty");
    match (first.kl_mean(), last.kl_mean()) {
        (Some(a), Some(b)) => Ok(b - a),
        _ => Ok(0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub mean: f64,
    pub p5: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
}

impl Band {
    pub fn from_values(values: &[f64]) -> Option<Band> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Band {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            p5: percentile_sorted(&v, 5.0),
            p25: percentile_sorted(&v, 25.0),
            p50: percentile_sorted(&v, 50.0),
            p75: percentile_sorted(&v, 75.0),
            p95: percentile_sorted(&v, 95.0),
        })
    }
}

/// Across-seed bands at one grid point; `bands[c]` follows `SCALAR_COLUMNS`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandRow {
    pub generation: u64,
    pub evals_used: u64,
    pub bands: Vec<Option<Band>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateBands {
    pub rows: Vec<BandRow>,
    pub n_streams: usize,
}

/// Per-grid-point order statistics across streams. Streams must share one
/// `(generation, evals_used)` grid; use `resample_to_grid` first when they do not.
pub fn aggregate(streams: &[Vec<GenerationRecord>]) -> Result<AggregateBands> {
    let first = streams.first().ok_or(Error::Empty("streams"))?;
    if first.is_empty() {
        return Err(Error::Empty("record stream"));
    }
    for (k, s) in streams.iter().enumerate() {
        let aligned = s.len() == first.len()
            && s.iter()
                .zip(first)
                .all(|(a, b)| a.generation == b.generation && a.evals_used == b.evals_used);
        if !aligned {
            return Err(Error::Misaligned(format!(
                "stream {k} does not share the grid of stream 0 ({} vs {} records)",
                s.len(),
                first.len()
            )));
        }
    }
    let rows = (0..first.len())
        .map(|i| {
            let bands = (0..SCALAR_COLUMNS.len())
                .map(|c| {
                    let vals: Vec<f64> = streams
                        .iter()
                        .filter_map(|s| s[i].scalars()[c])
                        .filter(|v| v.is_finite())
                        .collect();
                    Band::from_values(&vals)
                })
                .collect();
            BandRow {
                generation: first[i].generation,
                evals_used: first[i].evals_used,
                bands,
            }
        })
        .collect();
    Ok(AggregateBands {
        rows,
        n_streams: streams.len(),
    })
}

/// Nearest-record alignment onto an `evals_used` grid. Ties go to the earlier record.
pub fn resample_to_grid(
    stream: &[GenerationRecord],
    grid: &[u64],
) -> Result<Vec<GenerationRecord>> {
    if stream.is_empty() {
        return Err(Error::Empty("record stream"));
    }
    Ok(grid
        .iter()
        .map(|&e| {
            let best = stream
                .iter()
                .min_by_key(|r| r.evals_used.abs_diff(e))
                .expect("nonempty");
            GenerationRecord {
                evals_used: e,
                ..best.clone()
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ms(v: &[f64]) -> MixedStrategy {
        MixedStrategy::new(v.to_vec()).unwrap()
    }

    #[test]
    fn kl_examples() {
        let u = MixedStrategy::uniform(3);
        assert_eq!(kl_divergence(&u, &u, KL_FLOOR).unwrap(), 0.0);
        let pure = ms(&[1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(
            kl_divergence(&pure, &u, KL_FLOOR).unwrap(),
            3f64.ln(),
            epsilon = 1e-10
        );
        let p = ms(&[0.7, 0.2, 0.1]);
        let forward = kl_divergence(&p, &u, KL_FLOOR).unwrap();
        let backward = kl_divergence(&u, &p, KL_FLOOR).unwrap();
        let oracle_f = 0.7 * (2.1f64).ln() + 0.2 * (0.6f64).ln() + 0.1 * (0.3f64).ln();
        let oracle_b =
            (1.0 / 3.0) * ((1.0 / 2.1f64).ln() + (1.0 / 0.6f64).ln() + (1.0 / 0.3f64).ln());
        assert_abs_diff_eq!(forward, oracle_f, epsilon = 1e-12);
        assert_abs_diff_eq!(backward, oracle_b, epsilon = 1e-12);
        assert!((forward - backward).abs() > 1e-3);
        assert!(kl_divergence(&u, &MixedStrategy::uniform(2), KL_FLOOR).is_err());
    }

    #[test]
    fn mean_strategy_examples() {
        let a = ms(&[0.6, 0.4]);
        assert_eq!(mean_strategy(std::slice::from_ref(&a)).unwrap(), a);
        let m = mean_strategy(&[ms(&[0.8, 0.2]), ms(&[0.2, 0.8])]).unwrap();
        assert_abs_diff_eq!(m.probs()[0], 0.5, epsilon = 1e-15);
        assert!(mean_strategy(&[]).is_err());
    }

    #[test]
    fn percentile_inclusive() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.0), Some(1.0));
        assert_eq!(percentile(&v, 50.0), Some(3.0));
        assert_eq!(percentile(&v, 75.0), Some(4.0));
        assert_abs_diff_eq!(percentile(&v, 5.0).unwrap(), 1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(percentile(&[3.0, 1.0], 25.0).unwrap(), 1.5, epsilon = 1e-12);
        assert_eq!(percentile(&[], 50.0), None);
    }

    fn rec(gen: u64, evals: u64, kl: f64) -> GenerationRecord {
        GenerationRecord {
            generation: gen,
            evals_used: evals,
            kl_p1: Some(kl),
            kl_p2: Some(kl),
            ..Default::default()
        }
    }

    #[test]
    fn reduction_examples() {
        assert_eq!(
            kl_reduction(&[rec(0, 0, 0.3), rec(1, 5, 0.3)]).unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            kl_reduction(&[rec(0, 0, 0.08), rec(1, 5, 0.002)]).unwrap(),
            -0.078,
            epsilon = 1e-15
        );
        assert!(kl_reduction(&[]).is_err());
    }

    #[test]
    fn aggregate_single_and_constant() {
        let s = vec![rec(0, 0, 0.5), rec(1, 10, 0.25)];
        let agg = aggregate(std::slice::from_ref(&s)).unwrap();
        let b = agg.rows[1].bands[0].unwrap();
        assert_eq!((b.mean, b.p5, b.p95), (0.25, 0.25, 0.25));
        assert!(agg.rows[0].bands[2].is_none());

        let agg = aggregate(&[s.clone(), s.clone(), s]).unwrap();
        let b = agg.rows[0].bands[0].unwrap();
        assert_eq!(b.p95 - b.p5, 0.0);
    }

    #[test]
    fn aggregate_rejects_misaligned() {
        let a = vec![rec(0, 0, 0.5), rec(1, 10, 0.25)];
        let b = vec![rec(0, 0, 0.5), rec(1, 12, 0.25)];
        assert!(matches!(
            aggregate(&[a.clone(), b]),
            Err(Error::Misaligned(_))
        ));
        assert!(aggregate(&[a.clone(), vec![rec(0, 0, 0.1)]]).is_err());
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn resample_nearest() {
        let s = vec![rec(0, 0, 1.0), rec(1, 10, 2.0), rec(2, 20, 3.0)];
        let r = resample_to_grid(&s, &[0, 4, 6, 15, 100]).unwrap();
        let kls: Vec<f64> = r.iter().map(|x| x.kl_p1.unwrap()).collect();
        assert_eq!(kls, vec![1.0, 1.0, 2.0, 2.0, 3.0]);
        assert_eq!(r[3].evals_used, 15);
    }
}
