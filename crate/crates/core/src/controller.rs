//! Threshold controller: drives the DWAM threshold `l` by a preconditioned gradient step
//! on a smooth control loss built from the gate statistics of the current candidates.
//!
//! The loss has three parts: the mean gate weight against a target, a divergence proxy
//! against an adaptive negative target, and an inertia-weighted anchor pulling `l`
//! towards the mean base fitness. Derivatives of the gate are taken in `beta = b - l`
//! with the generalization deficit frozen, and the sign `d beta / d l = -1` is applied here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::governance::{alpha_from_gate, gate_inputs, DwamParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerParams {
    pub w_a: f64,
    pub w_d: f64,
    pub w_anchor_base: f64,
    pub alpha_target: f64,
    pub kappa: f64,
    pub tau: f64,
    pub eta_l: f64,
    pub gamma_max: f64,
    pub k_gamma: f64,
    pub delta_stable: f64,
    /// Threshold at generation 0.
    pub l_init: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            w_a: 1.0,
            w_d: 1.0,
            w_anchor_base: 0.5,
            alpha_target: 0.7,
            kappa: 0.1,
            tau: 0.05,
            eta_l: 0.01,
            gamma_max: 10.0,
            k_gamma: 1.05,
            delta_stable: 1e-3,
            l_init: 0.0,
        }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("controller.{what}")));
        if !(self.w_a >= 0.0 && self.w_d >= 0.0 && self.w_anchor_base >= 0.0) {
            return bad("weights must be nonnegative");
        }
        if !(self.kappa > 0.0) {
            return bad("kappa must be positive");
        }
        if !(self.tau > 0.0) {
            return bad("tau must be positive");
        }
        // eta_l = 0 freezes the threshold, which the ablations rely on.
        if !(self.eta_l >= 0.0) {
            return bad("eta_l must be nonnegative");
        }
        if !(self.gamma_max >= 1.0) {
            return bad("gamma_max must be >= 1");
        }
        if !(self.k_gamma > 1.0) {
            return bad("k_gamma must be > 1");
        }
        if !(self.delta_stable > 0.0) {
            return bad("delta_stable must be positive");
        }
        if !self.l_init.is_finite() {
            return bad("l_init must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub l: f64,
    pub gamma: f64,
    pub prev_delta_l: f64,
    pub prev_prev_delta_l: f64,
}

impl ControllerState {
    pub fn new(l: f64) -> Self {
        Self {
            l,
            gamma: 1.0,
            prev_delta_l: 0.0,
            prev_prev_delta_l: 0.0,
        }
    }
}

/// Per-candidate statistics consumed by the controller.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControllerInputs {
    pub b_hats: Vec<f64>,
    pub g_hats: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_d1s: Vec<f64>,
    pub alpha_d2s: Vec<f64>,
}

impl ControllerInputs {
    /// Gate values and derivatives of every candidate at threshold `l`.
    pub fn at_threshold(b_hats: &[f64], g_hats: &[f64], l: f64, dwam: &DwamParams) -> Self {
        let n = b_hats.len();
        let mut out = Self {
            b_hats: b_hats.to_vec(),
            g_hats: g_hats.to_vec(),
            alphas: Vec::with_capacity(n),
            alpha_d1s: Vec::with_capacity(n),
            alpha_d2s: Vec::with_capacity(n),
        };
        for (&b, &g) in b_hats.iter().zip(g_hats) {
            let (beta, delta) = gate_inputs(b, g, l);
            let (a, d1, d2) = gate_with_derivatives(beta, delta, dwam);
            out.alphas.push(a);
            out.alpha_d1s.push(d1);
            out.alpha_d2s.push(d2);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.b_hats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b_hats.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let n = self.b_hats.len();
        if n == 0 {
            return Err(Error::Empty("controller inputs"));
        }
        for len in [
            self.g_hats.len(),
            self.alphas.len(),
            self.alpha_d1s.len(),
            self.alpha_d2s.len(),
        ] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: len,
                });
            }
        }
        Ok(())
    }
}

/// `(alpha, d alpha / d beta, d^2 alpha / d beta^2)` with delta fixed.
pub fn gate_with_derivatives(beta: f64, delta: f64, dwam: &DwamParams) -> (f64, f64, f64) {
    let a = alpha_from_gate(beta, delta, dwam);
    if beta < 0.0 {
        return (a, 0.0, 0.0);
    }
    let sd = dwam.s * delta;
    let e = (-sd * beta).exp();
    let scale = dwam.omega - 0.5;
    (a, -scale * sd * e, scale * sd * sd * e)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControllerDiagnostics {
    pub a_val: f64,
    pub alpha_mean: f64,
    pub l_anchor: f64,
    pub d_val: f64,
    pub eps_val: f64,
    pub loss: f64,
    pub grad: f64,
    pub fim: f64,
    pub w_anchor_eff: f64,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `mean(alphas) - alpha_target`.
pub fn compute_a(alphas: &[f64], alpha_target: f64) -> Result<f64> {
    if alphas.is_empty() {
        return Err(Error::Empty("alphas"));
    }
    Ok(mean(alphas) - alpha_target)
}

fn gap_norm_and_signs(b_hats: &[f64], g_hats: &[f64]) -> (f64, Vec<f64>) {
    let gaps: Vec<f64> = b_hats.iter().zip(g_hats).map(|(b, g)| b - g).collect();
    let norm = gaps.iter().map(|r| r * r).sum::<f64>().sqrt();
    (norm, gaps.into_iter().map(sign).collect())
}

/// `||r||_2 * mean(sign(r_i) alpha'_i)` with `r = b - g`.
pub fn divergence_proxy(b_hats: &[f64], g_hats: &[f64], alpha_d1s: &[f64]) -> f64 {
    let (norm, signs) = gap_norm_and_signs(b_hats, g_hats);
    let n = signs.len() as f64;
    norm * signs.iter().zip(alpha_d1s).map(|(s, a)| s * a).sum::<f64>() / n
}

/// `d D / d l = -||r||_2 * mean(sign(r_i) alpha''_i)`.
pub fn divergence_grad(b_hats: &[f64], g_hats: &[f64], alpha_d2s: &[f64]) -> f64 {
    let (norm, signs) = gap_norm_and_signs(b_hats, g_hats);
    let n = signs.len() as f64;
    -norm * signs.iter().zip(alpha_d2s).map(|(s, a)| s * a).sum::<f64>() / n
}

/// Adaptive negative target `-kappa |D|`.
pub fn eps_target(d_val: f64, kappa: f64) -> f64 {
    -kappa * d_val.abs()
}

/// Population variance of `b - g` plus `tau^2`.
pub fn fim_proxy(b_hats: &[f64], g_hats: &[f64], tau: f64) -> f64 {
    let gaps: Vec<f64> = b_hats.iter().zip(g_hats).map(|(b, g)| b - g).collect();
    let m = mean(&gaps);
    let var = gaps.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / gaps.len() as f64;
    var + tau * tau
}

/// Control loss and its analytic derivative in `l`, with the anchor weight given explicitly.
pub fn control_loss_and_grad(
    l: f64,
    w_anchor_eff: f64,
    params: &ControllerParams,
    inputs: &ControllerInputs,
) -> Result<(f64, f64, ControllerDiagnostics)> {
    inputs.validate()?;
    let a_val = compute_a(&inputs.alphas, params.alpha_target)?;
    let da = -mean(&inputs.alpha_d1s);
    let d_val = divergence_proxy(&inputs.b_hats, &inputs.g_hats, &inputs.alpha_d1s);
    let dd = divergence_grad(&inputs.b_hats, &inputs.g_hats, &inputs.alpha_d2s);
    let eps_val = eps_target(d_val, params.kappa);
    let deps = -params.kappa * sign(d_val) * dd;
    let l_anchor = mean(&inputs.b_hats);

    let resid_d = d_val - eps_val;
    let loss = params.w_a * a_val * a_val
        + params.w_d * resid_d * resid_d
        + w_anchor_eff * (l - l_anchor).powi(2);
    let grad = 2.0 * params.w_a * a_val * da
        + 2.0 * params.w_d * resid_d * (dd - deps)
        + 2.0 * w_anchor_eff * (l - l_anchor);

    let diag = ControllerDiagnostics {
        a_val,
        alpha_mean: a_val + params.alpha_target,
        l_anchor,
        d_val,
        eps_val,
        loss,
        grad,
        fim: fim_proxy(&inputs.b_hats, &inputs.g_hats, params.tau),
        w_anchor_eff,
    };
    Ok((loss, grad, diag))
}

/// Inertia update from the magnitudes of the last two threshold moves.
pub fn inertia_update(state: &ControllerState, params: &ControllerParams, new_delta_l: f64) -> f64 {
    if (new_delta_l.abs() - state.prev_delta_l.abs()).abs() <= params.delta_stable {
        (state.gamma * params.k_gamma).min(params.gamma_max)
    } else {
        1.0
    }
}

/// One preconditioned step on `l`, followed by the inertia update.
pub fn controller_step(
    state: &ControllerState,
    params: &ControllerParams,
    inputs: &ControllerInputs,
) -> Result<(ControllerState, ControllerDiagnostics)> {
    let w_anchor_eff = params.w_anchor_base * state.gamma;
    let (_, grad, diag) = control_loss_and_grad(state.l, w_anchor_eff, params, inputs)?;
    let delta_l = -params.eta_l * grad / diag.fim;
    let gamma = inertia_update(state, params, delta_l);
    let next = ControllerState {
        l: state.l + delta_l,
        gamma,
        prev_delta_l: delta_l,
        prev_prev_delta_l: state.prev_delta_l,
    };
    Ok((next, diag))
}

/// Dynamic-equilibrium check over a trailing window: the mean controller gradient is
/// within `grad_tol` of zero and the divergence proxy stayed nonpositive throughout.
pub fn dep_reached(history: &[ControllerDiagnostics], grad_tol: f64, window: usize) -> bool {
    if window == 0 || history.len() < window {
        return false;
    }
    let tail = &history[history.len() - window..];
    let mean_grad = tail.iter().map(|d| d.grad).sum::<f64>() / window as f64;
    mean_grad.abs() <= grad_tol && tail.iter().all(|d| d.d_val <= 0.0)
}
