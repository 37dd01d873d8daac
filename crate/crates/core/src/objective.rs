//! Dot-product scores, hardness weights for negatives and the weighted
//! node-wise contrastive loss
//!
//! ```text
//! ℓ = -log( e^{s⁺/τ} / (e^{s⁺/τ} + Σ_j w_j e^{s_j/τ}) ),   s⁺ = h_q·h_k,  s_j = h_q·h_j
//! ```
//!
//! with exact gradients. Negatives are constants (stop-gradient); the
//! weights are a function of `h_q` and [`weighted_loss`] backpropagates
//! through them.

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};

pub fn score(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.dot(&b)
}

/// Hardness weights: raw `w_j = (h_q·h_j)/τ_w`, clamped at zero, then
/// rescaled so the weights average to 1 over all negatives. All-zero after
/// clamping falls back to unit weights.
pub fn negative_weights(h_q: ArrayView1<'_, f64>, negs: &[ArrayView1<'_, f64>], tau_w: f64) -> Result<Vec<f64>> {
    if !(tau_w > 0.0) {
        return Err(Error::Param(format!("tau_w = {tau_w} must be positive")));
    }
    let clamped: Vec<f64> = negs.iter().map(|h| (score(h_q, *h) / tau_w).max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if total <= 0.0 {
        return Ok(vec![1.0; negs.len()]);
    }
    let scale = negs.len() as f64 / total;
    Ok(clamped.into_iter().map(|w| w * scale).collect())
}

/// Per-anchor loss value and gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerms {
    pub pos_score: f64,
    pub neg_scores: Vec<f64>,
    pub weights: Vec<f64>,
    pub tau: f64,
    pub loss: f64,
    pub grad_hq: Array1<f64>,
    pub grad_hk: Array1<f64>,
    pub grad_negs: Vec<Array1<f64>>,
    /// `∂ℓ/∂w_j`.
    pub grad_weights: Vec<f64>,
}

/// Weighted InfoNCE term for one anchor. Uses a max shift inside the
/// log-sum-exp. Empty negatives give a zero loss with zero gradients.
pub fn contrastive_loss(
    h_q: ArrayView1<'_, f64>,
    h_k: ArrayView1<'_, f64>,
    negs: &[ArrayView1<'_, f64>],
    weights: &[f64],
    tau: f64,
) -> Result<LossTerms> {
    if !(tau > 0.0) {
        return Err(Error::Param(format!("tau = {tau} must be positive")));
    }
    if weights.len() != negs.len() {
        return Err(Error::Contract(format!(
            "{} weights for {} negatives",
            weights.len(),
            negs.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
        return Err(Error::Contract(format!("negative or NaN weight {w}")));
    }
    let d = h_q.len();
    if h_k.len() != d || negs.iter().any(|h| h.len() != d) {
        return Err(Error::Contract("embedding dimensions differ".into()));
    }

    let pos_score = score(h_q, h_k);
    let neg_scores: Vec<f64> = negs.iter().map(|h| score(h_q, *h)).collect();
    if !pos_score.is_finite() || neg_scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("contrastive score".into()));
    }

    let zero_terms = |neg_scores: Vec<f64>| LossTerms {
        pos_score,
        grad_negs: vec![Array1::zeros(d); neg_scores.len()],
        grad_weights: vec![0.0; neg_scores.len()],
        neg_scores,
        weights: weights.to_vec(),
        tau,
        loss: 0.0,
        grad_hq: Array1::zeros(d),
        grad_hk: Array1::zeros(d),
    };
    if negs.is_empty() {
        return Ok(zero_terms(neg_scores));
    }

    let pos_logit = pos_score / tau;
    let shift = neg_scores
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(s, _)| s / tau)
        .fold(pos_logit, f64::max);
    let pos_exp = (pos_logit - shift).exp();
    let neg_exp: Vec<f64> = neg_scores.iter().map(|s| (s / tau - shift).exp()).collect();
    let denom = pos_exp + neg_exp.iter().zip(weights).map(|(e, w)| e * w).sum::<f64>();
    let loss = (denom.ln() - (pos_logit - shift)).max(0.0);

    // ∂ℓ/∂s⁺ = (π⁺ - 1)/τ,  ∂ℓ/∂s_j = π_j/τ
    let d_pos = (pos_exp / denom - 1.0) / tau;
    let d_neg: Vec<f64> = neg_exp.iter().zip(weights).map(|(e, w)| w * e / denom / tau).collect();
    let grad_weights: Vec<f64> = neg_exp.iter().map(|e| e / denom).collect();

    let mut grad_hq = h_k.to_owned() * d_pos;
    for (h, &g) in negs.iter().zip(&d_neg) {
        grad_hq.scaled_add(g, h);
    }
    let grad_hk = h_q.to_owned() * d_pos;
    let grad_negs = d_neg.iter().map(|&g| h_q.to_owned() * g).collect();

    Ok(LossTerms {
        pos_score,
        neg_scores,
        weights: weights.to_vec(),
        tau,
        loss,
        grad_hq,
        grad_hk,
        grad_negs,
        grad_weights,
    })
}

/// Contrastive loss with hardness weights computed from `h_q` (or unit
/// weights when `use_weights` is off). Gradients w.r.t. `h_q` and the
/// negatives include the path through the weights.
pub fn weighted_loss(
    h_q: ArrayView1<'_, f64>,
    h_k: ArrayView1<'_, f64>,
    negs: &[ArrayView1<'_, f64>],
    tau: f64,
    tau_w: f64,
    use_weights: bool,
) -> Result<LossTerms> {
    if !use_weights {
        return contrastive_loss(h_q, h_k, negs, &vec![1.0; negs.len()], tau);
    }
    let weights = negative_weights(h_q, negs, tau_w)?;
    let mut terms = contrastive_loss(h_q, h_k, negs, &weights, tau)?;

    // w_j = n r_j / Σ r,  r_j = max(h_q·h_j / τ_w, 0)
    let raw: Vec<f64> = negs.iter().map(|h| score(h_q, *h) / tau_w).collect();
    let total: f64 = raw.iter().map(|r| r.max(0.0)).sum();
    if total > 0.0 {
        let n = negs.len() as f64;
        let mean_gw: f64 = terms
            .grad_weights
            .iter()
            .zip(&weights)
            .map(|(g, w)| g * w)
            .sum::<f64>()
            / n;
        for (j, (h, r)) in negs.iter().zip(&raw).enumerate() {
            if *r > 0.0 {
                let d_raw = n / total * (terms.grad_weights[j] - mean_gw);
                terms.grad_hq.scaled_add(d_raw / tau_w, h);
                terms.grad_negs[j].scaled_add(d_raw / tau_w, &h_q);
            }
        }
    }
    Ok(terms)
}

/// One anchor's inputs to [`batch_loss`].
#[derive(Debug, Clone)]
pub struct AnchorTerms<'a> {
    pub h_q: ArrayView1<'a, f64>,
    pub h_k: ArrayView1<'a, f64>,
    pub negs: Vec<ArrayView1<'a, f64>>,
}

#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub total: f64,
    /// Per-anchor terms in input order; `grad_negs` are computed but the
    /// training loop discards them (negatives are constants).
    pub terms: Vec<LossTerms>,
}

/// Sum of per-anchor weighted losses, reduced in input order.
pub fn batch_loss(anchors: &[AnchorTerms<'_>], tau: f64, tau_w: f64, use_weights: bool) -> Result<BatchLoss> {
    let terms = anchors
        .iter()
        .map(|a| weighted_loss(a.h_q, a.h_k, &a.negs, tau, tau_w, use_weights))
        .collect::<Result<Vec<_>>>()?;
    let total = terms.iter().map(|t| t.loss).sum();
    Ok(BatchLoss { total, terms })
}
