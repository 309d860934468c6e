//! Isotropic-Gaussian NES actuator with antithetic sampling and the progress-gated,
//! entropy-driven exploration controller (AEC).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::MixedStrategy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchDistribution {
    pub theta: Vec<f64>,
    pub sigma: f64,
}

impl SearchDistribution {
    pub fn new(theta: Vec<f64>, sigma: f64) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::Empty("search distribution mean"));
        }
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self { theta, sigma })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}

/// Standard-normal perturbations, one row per candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationBatch {
    pub eps: Vec<Vec<f64>>,
    pub antithetic: bool,
}

impl PerturbationBatch {
    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    /// Candidate parameters `theta + sigma * eps_j`.
    pub fn candidates(&self, dist: &SearchDistribution) -> Vec<Vec<f64>> {
        self.eps
            .iter()
            .map(|e| {
                dist.theta
                    .iter()
                    .zip(e)
                    .map(|(t, z)| t + dist.sigma * z)
                    .collect()
            })
            .collect()
    }
}

/// Draw `n` perturbations; with `antithetic`, rows `n/2..n` mirror rows `0..n/2`.
pub fn sample_batch<R: Rng + ?Sized>(
    dist: &SearchDistribution,
    n: usize,
    antithetic: bool,
    rng: &mut R,
) -> Result<PerturbationBatch> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "NES population must be >= 2, got {n}"
        )));
    }
    if antithetic && !n.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "antithetic sampling needs an even population, got {n}"
        )));
    }
    if !(dist.sigma > 0.0) {
        return Err(Error::InvalidParameter("sigma must be positive".into()));
    }
    let d = dist.dim();
    let draw = |rng: &mut R| -> Vec<f64> { (0..d).map(|_| rng.sample(StandardNormal)).collect() };
    let eps = if antithetic {
        let half: Vec<Vec<f64>> = (0..n / 2).map(|_| draw(rng)).collect();
        let mirror: Vec<Vec<f64>> = half
            .iter()
            .map(|e| e.iter().map(|z| -z).collect())
            .collect();
        half.into_iter().chain(mirror).collect()
    } else {
        (0..n).map(|_| draw(rng)).collect()
    };
    Ok(PerturbationBatch { eps, antithetic })
}

/// Score-function gradient estimate. Antithetic batches use the paired form, which
/// cancels a constant fitness exactly.
pub fn nes_gradient(fs: &[f64], batch: &PerturbationBatch, sigma: f64) -> Vec<f64> {
    if batch.antithetic {
        nes_gradient_paired(fs, batch, sigma)
    } else {
        nes_gradient_unpaired(fs, batch, sigma)
    }
}

/// `(1 / (N sigma)) sum_j f_j eps_j`.
pub fn nes_gradient_unpaired(fs: &[f64], batch: &PerturbationBatch, sigma: f64) -> Vec<f64> {
    let n = batch.len();
    let d = batch.eps.first().map_or(0, Vec::len);
    let mut g = vec![0.0; d];
    for (f, e) in fs.iter().zip(&batch.eps) {
        for (gk, ek) in g.iter_mut().zip(e) {
            *gk += f * ek;
        }
    }
    let scale = 1.0 / (n as f64 * sigma);
    g.iter_mut().for_each(|v| *v *= scale);
    g
}

/// Paired form for antithetic batches: `(1 / (N sigma)) sum_{j < N/2} (f_j - f_{j+N/2}) eps_j`.
pub fn nes_gradient_paired(fs: &[f64], batch: &PerturbationBatch, sigma: f64) -> Vec<f64> {
    let n = batch.len();
    let half = n / 2;
    let d = batch.eps.first().map_or(0, Vec::len);
    let mut g = vec![0.0; d];
    for j in 0..half {
        let diff = fs[j] - fs[j + half];
        for (gk, ek) in g.iter_mut().zip(&batch.eps[j]) {
            *gk += diff * ek;
        }
    }
    let scale = 1.0 / (n as f64 * sigma);
    g.iter_mut().for_each(|v| *v *= scale);
    g
}

/// Re-estimates the gradient at a given search distribution.
pub type GradientFn<'a> = &'a mut dyn FnMut(&SearchDistribution) -> Vec<f64>;

/// Fixed-rate mean update. With `extragradient`, the gradient is re-estimated at the
/// predicted mean `theta + eta g` and that estimate is applied from the original mean.
pub fn mean_update(
    dist: &SearchDistribution,
    g: &[f64],
    eta_theta: f64,
    extragradient: Option<GradientFn<'_>>,
) -> SearchDistribution {
    let step = |g: &[f64]| -> Vec<f64> {
        dist.theta
            .iter()
            .zip(g)
            .map(|(t, gk)| t + eta_theta * gk)
            .collect()
    };
    let predicted = SearchDistribution {
        theta: step(g),
        sigma: dist.sigma,
    };
    match extragradient {
        None => predicted,
        Some(eval) => {
            let corrected = eval(&predicted);
            SearchDistribution {
                theta: step(&corrected),
                sigma: dist.sigma,
            }
        }
    }
}

/// Shannon entropy divided by `log d`, with entries floored at 1e-12.
pub fn policy_entropy_normalized(p: &MixedStrategy) -> f64 {
    let d = p.dim();
    if d < 2 {
        return 0.0;
    }
    let h: f64 = p
        .probs()
        .iter()
        .map(|&v| {
            let v = v.max(1e-12);
            -v * v.ln()
        })
        .sum();
    h / (d as f64).ln()
}

/// Actuator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NesParams {
    pub population: usize,
    pub eta_theta: f64,
    /// Initial exploration scale of the search distribution.
    pub sigma_init: f64,
    pub antithetic: bool,
    pub extragradient: bool,
    /// Clamp the mean back into the policy box after each step.
    pub project_mean: bool,
}

impl Default for NesParams {
    fn default() -> Self {
        Self {
            population: 50,
            eta_theta: 0.05,
            sigma_init: 0.1,
            antithetic: true,
            extragradient: false,
            project_mean: true,
        }
    }
}

impl NesParams {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 || (self.antithetic && !self.population.is_multiple_of(2)) {
            return Err(Error::InvalidParameter(format!(
                "nes.population must be >= 2 and even when antithetic, got {}",
                self.population
            )));
        }
        if !(self.eta_theta > 0.0) {
            return Err(Error::InvalidParameter(
                "nes.eta_theta must be positive".into(),
            ));
        }
        if !(self.sigma_init > 0.0) {
            return Err(Error::InvalidParameter(
                "nes.sigma_init must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AecParams {
    pub alpha_ema: f64,
    pub sigma_min: f64,
    pub sigma_mid: f64,
    pub sigma_max: f64,
    /// Normalized-entropy level below which stagnation triggers maximal exploration.
    pub entropy_threshold: f64,
}

impl Default for AecParams {
    fn default() -> Self {
        Self {
            alpha_ema: 0.1,
            sigma_min: 0.01,
            sigma_mid: 0.1,
            sigma_max: 0.3,
            entropy_threshold: 0.5,
        }
    }
}

impl AecParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_ema > 0.0 && self.alpha_ema <= 1.0) {
            return Err(Error::InvalidParameter(
                "aec.alpha_ema must lie in (0, 1]".into(),
            ));
        }
        if !(0.0 < self.sigma_min
            && self.sigma_min <= self.sigma_mid
            && self.sigma_mid <= self.sigma_max)
        {
            return Err(Error::InvalidParameter(
                "aec sigmas must satisfy 0 < sigma_min <= sigma_mid <= sigma_max".into(),
            ));
        }
        Ok(())
    }
}

/// AEC state: the EMA baseline of mean fitness (unset until the first observation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AecState {
    pub f_ema: Option<f64>,
    pub params: AecParams,
}

impl AecState {
    pub fn new(params: AecParams) -> Self {
        Self {
            f_ema: None,
            params,
        }
    }
}

/// Progress gate against the EMA baseline before it absorbs `mu_f`, then a smoothed
/// move of sigma towards the selected target. Returns the new sigma.
pub fn aec_step(aec: &mut AecState, mu_f: f64, h_norm: f64, sigma: f64) -> f64 {
    let p = aec.params;
    let progress = matches!(aec.f_ema, Some(prev) if mu_f > prev);
    aec.f_ema = Some(match aec.f_ema {
        None => mu_f,
        Some(prev) => (1.0 - p.alpha_ema) * prev + p.alpha_ema * mu_f,
    });
    let target = if progress {
        p.sigma_min
    } else if h_norm < p.entropy_threshold {
        p.sigma_max
    } else {
        p.sigma_mid
    };
    0.9 * sigma + 0.1 * target
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dist(d: usize) -> SearchDistribution {
        SearchDistribution::new(vec![0.3; d], 0.2).unwrap()
    }

    #[test]
    fn antithetic_batch_cancels() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = sample_batch(&dist(4), 10, true, &mut rng).unwrap();
        // Summed pair by pair the columns cancel exactly.
        for k in 0..4 {
            let s: f64 = (0..5).map(|j| b.eps[j][k] + b.eps[j + 5][k]).sum();
            assert_eq!(s, 0.0);
        }
        for j in 0..5 {
            for k in 0..4 {
                assert_eq!(b.eps[j + 5][k], -b.eps[j][k]);
            }
        }
    }

    #[test]
    fn batch_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        assert!(sample_batch(&dist(2), 7, true, &mut rng).is_err());
        assert!(sample_batch(&dist(2), 7, false, &mut rng).is_ok());
        assert!(SearchDistribution::new(vec![0.0], 0.0).is_err());
        let a = sample_batch(&dist(3), 6, true, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_batch(&dist(3), 6, true, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_fitness_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = sample_batch(&dist(3), 8, true, &mut rng).unwrap();
        let g = nes_gradient(&[1.7; 8], &b, 0.2);
        assert!(g.iter().all(|&v| v == 0.0), "{g:?}");
        let gp = nes_gradient_paired(&[1.7; 8], &b, 0.2);
        assert!(gp.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_evaluated_gradient() {
        let b = PerturbationBatch {
            eps: vec![vec![1.0], vec![-1.0]],
            antithetic: true,
        };
        assert_eq!(nes_gradient_unpaired(&[1.0, 0.0], &b, 0.5), vec![1.0]);
        assert_eq!(nes_gradient_paired(&[1.0, 0.0], &b, 0.5), vec![1.0]);
    }

    #[test]
    fn mean_update_examples() {
        let d = SearchDistribution::new(vec![0.5, 0.5], 0.1).unwrap();
        assert_eq!(
            mean_update(&d, &[0.0, 0.0], 0.1, None).theta,
            vec![0.5, 0.5]
        );
        let moved = mean_update(&d, &[1.0, -1.0], 0.1, None);
        assert_abs_diff_eq!(moved.theta[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(moved.theta[1], 0.4, epsilon = 1e-15);
        let mut same = |_: &SearchDistribution| vec![1.0, -1.0];
        let eg = mean_update(&d, &[1.0, -1.0], 0.1, Some(&mut same));
        assert_eq!(eg, moved);
        let mut seen = Vec::new();
        let mut probe = |p: &SearchDistribution| {
            seen.push(p.theta.clone());
            vec![0.0, 2.0]
        };
        let eg = mean_update(&d, &[1.0, -1.0], 0.1, Some(&mut probe));
        assert_abs_diff_eq!(eg.theta[1], 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(seen[0][0], 0.6, epsilon = 1e-15);
    }

    #[test]
    fn entropy_examples() {
        assert_abs_diff_eq!(
            policy_entropy_normalized(&MixedStrategy::uniform(3)),
            1.0,
            epsilon = 1e-12
        );
        let e = 1e-12;
        let near_pure = MixedStrategy::new(vec![1.0 - 2.0 * e, e, e]).unwrap();
        assert!(policy_entropy_normalized(&near_pure) < 1e-9);
        let p = MixedStrategy::new(vec![0.5, 0.25, 0.25]).unwrap();
        let expected = 1.5 * 2f64.ln() / 3f64.ln();
        assert_abs_diff_eq!(policy_entropy_normalized(&p), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 0.946395, epsilon = 1e-6);
    }

    #[test]
    fn aec_targets() {
        let mut aec = AecState::new(AecParams::default());
        // First observation seeds the baseline without progress.
        let s = aec_step(&mut aec, 1.0, 0.9, 0.2);
        assert_abs_diff_eq!(s, 0.9 * 0.2 + 0.1 * 0.1, epsilon = 1e-15);
        // Progress: target sigma_min.
        let s = aec_step(&mut aec, 2.0, 0.9, 0.2);
        assert_abs_diff_eq!(s, 0.9 * 0.2 + 0.1 * 0.01, epsilon = 1e-15);
        // No progress with low entropy: sigma_max.
        let s = aec_step(&mut aec, -5.0, 0.3, 0.2);
        assert_abs_diff_eq!(s, 0.9 * 0.2 + 0.1 * 0.3, epsilon = 1e-15);
        let s = aec_step(&mut aec, -5.0, 0.9, 0.2);
        assert_abs_diff_eq!(s, 0.19, epsilon = 1e-15);
    }
}
