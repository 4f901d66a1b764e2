//! Poisson document scaling (stage one).
//!
//! Each count `w_ik` of term `k` in document `i` is modeled as
//! `Poisson(λ_ik)` with `log λ_ik = α_i + ν_k + β_k·ψ_i`: `α` absorbs document
//! verbosity, `ν` term frequency, `β_k` is the term's discrimination and
//! `ψ_i` the document's position on a one-dimensional scale. Estimation is
//! block coordinate ascent — an exact 2-parameter Newton subproblem per term
//! and per document, each safeguarded by step halving — so the log-likelihood
//! trace is non-decreasing. The scale is identified by pinning `mean(ψ)=0`,
//! `sd(ψ)=1`, `α₀=0`, and a direction anchor (`ψ[high] > ψ[low]`); all four
//! transforms are applied with exact compensation in `ν`/`β` so they never
//! change the likelihood.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{DocumentMeta, DocumentTermMatrix, Vocabulary};
use crate::error::Error;
use crate::math;
use crate::Result;

/// Absolute cap on |β_k| and |ψ_i| during estimation.
const PARAM_CAP: f64 = 25.0;

/// Estimation settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct WordfishConfig {
    /// Maximum number of EM (block-ascent) iterations.
    pub max_em_iters: usize,
    /// Stop when the relative log-likelihood change falls below this.
    pub tol: f64,
    /// Newton iterations per 2-parameter subproblem within one block pass.
    pub inner_newton_iters: usize,
    /// `(low_doc_id, high_doc_id)`: after fitting, `psi[high] > psi[low]`.
    /// Without an anchor the direction of the scale is arbitrary.
    pub direction_anchor: Option<(String, String)>,
    /// Seed for the power-iteration start vector (the rest of the
    /// initialization is deterministic).
    pub seed: u64,
}

impl Default for WordfishConfig {
    fn default() -> Self {
        WordfishConfig {
            max_em_iters: 500,
            tol: 1e-6,
            inner_newton_iters: 10,
            direction_anchor: None,
            seed: 42,
        }
    }
}

/// Record of the identification transforms applied to the returned model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Identification {
    /// Direction anchor used, if any.
    pub anchor: Option<(String, String)>,
    /// Whether the direction anchor forced a sign flip of `(β, ψ)`.
    pub flipped: bool,
}

/// A fitted Poisson scaling model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WordfishModel {
    /// Document fixed effects (first document pinned to 0).
    pub alpha: Vec<f64>,
    /// Term fixed effects.
    pub nu: Vec<f64>,
    /// Term discriminations.
    pub beta: Vec<f64>,
    /// Document positions (mean 0, sd 1).
    pub psi: Vec<f64>,
    /// Log-likelihood trace: entry 0 is the initialization, then one entry
    /// per EM iteration.
    pub loglik: Vec<f64>,
    /// Identification record.
    pub identification: Identification,
    /// Whether the relative-change stopping rule fired before `max_em_iters`.
    pub converged: bool,
    /// Number of EM iterations run.
    pub n_iters: usize,
}

/// Analytic gradient of the Poisson log-likelihood in all four blocks.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub alpha: Vec<f64>,
    pub nu: Vec<f64>,
    pub beta: Vec<f64>,
    pub psi: Vec<f64>,
}

impl WordfishModel {
    /// Full Poisson log-likelihood of `dtm` under this model:
    /// `Σ_ik [w·logλ − λ − ln(w!)]`.
    pub fn log_likelihood(&self, dtm: &DocumentTermMatrix) -> Result<f64> {
        self.check_dims(dtm)?;
        let counts = dtm.to_dense();
        Ok(loglik_dense(
            &counts,
            &self.alpha,
            &self.nu,
            &self.beta,
            &self.psi,
        ))
    }

    /// Analytic gradient of [`Self::log_likelihood`] with respect to each
    /// parameter block.
    pub fn gradient(&self, dtm: &DocumentTermMatrix) -> Result<Gradient> {
        self.check_dims(dtm)?;
        let counts = dtm.to_dense();
        let (d, w) = counts.dim();
        let mut g = Gradient {
            alpha: vec![0.0; d],
            nu: vec![0.0; w],
            beta: vec![0.0; w],
            psi: vec![0.0; d],
        };
        for i in 0..d {
            for k in 0..w {
                let lambda = (self.alpha[i] + self.nu[k] + self.beta[k] * self.psi[i]).exp();
                let r = counts[(i, k)] - lambda;
                g.alpha[i] += r;
                g.psi[i] += self.beta[k] * r;
                g.nu[k] += r;
                g.beta[k] += self.psi[i] * r;
            }
        }
        Ok(g)
    }

    fn check_dims(&self, dtm: &DocumentTermMatrix) -> Result<()> {
        if self.alpha.len() != dtm.n_docs() || self.nu.len() != dtm.n_terms() {
            return Err(Error::DimensionMismatch(format!(
                "model is {}×{}, matrix is {}×{}",
                self.alpha.len(),
                self.nu.len(),
                dtm.n_docs(),
                dtm.n_terms()
            )));
        }
        Ok(())
    }
}

fn loglik_dense(counts: &Array2<f64>, alpha: &[f64], nu: &[f64], beta: &[f64], psi: &[f64]) -> f64 {
    let (d, _) = counts.dim();
    let partials: Vec<f64> = (0..d)
        .into_par_iter()
        .map(|i| {
            let row = counts.row(i);
            let mut ll = 0.0;
            for (k, &w) in row.iter().enumerate() {
                let theta = alpha[i] + nu[k] + beta[k] * psi[i];
                ll += w * theta - theta.exp() - math::ln_factorial(w);
            }
            ll
        })
        .collect();
    partials.iter().sum()
}

/// Fit the scaling model by block coordinate ascent.
///
/// The returned model is fully identified: `mean(ψ)=0`, `sd(ψ)=1`, `α₀=0`,
/// and, when a direction anchor is configured, `ψ[high] > ψ[low]`.
pub fn fit(dtm: &DocumentTermMatrix, config: &WordfishConfig) -> Result<WordfishModel> {
    let d = dtm.n_docs();
    let w = dtm.n_terms();
    if d < 3 {
        return Err(Error::ScaleUnidentified(format!(
            "need at least 3 documents, got {d}"
        )));
    }
    if w < 2 {
        return Err(Error::ScaleUnidentified(format!(
            "need at least 2 terms, got {w}"
        )));
    }
    let counts = dtm.to_dense();
    let rowsums: Vec<f64> = (0..d).map(|i| counts.row(i).sum()).collect();
    let colsums: Vec<f64> = (0..w).map(|k| counts.column(k).sum()).collect();
    if let Some(i) = rowsums.iter().position(|&r| r <= 0.0) {
        return Err(Error::DimensionMismatch(format!(
            "document {i} has zero tokens"
        )));
    }
    if let Some(k) = colsums.iter().position(|&c| c <= 0.0) {
        return Err(Error::DimensionMismatch(format!(
            "term {k} has zero corpus count"
        )));
    }

    // --- Initialization (deterministic given the seed) ---
    let mut alpha: Vec<f64> = rowsums.iter().map(|&r| (r / rowsums[0]).ln()).collect();
    let mut nu: Vec<f64> = colsums.iter().map(|&c| (c / d as f64).ln()).collect();
    let mut beta = vec![0.0; w];
    let mut psi = init_psi(&counts, config.seed)?;

    let mut trace = Vec::with_capacity(config.max_em_iters + 1);
    trace.push(loglik_dense(&counts, &alpha, &nu, &beta, &psi));

    let mut converged = false;
    let mut n_iters = 0;
    for _ in 0..config.max_em_iters {
        n_iters += 1;

        // Term block: maximize each (ν_k, β_k) given (α, ψ).
        let cols: Vec<(f64, f64)> = (0..w)
            .into_par_iter()
            .map(|k| {
                let col: Vec<f64> = counts.column(k).to_vec();
                newton_pair(
                    nu[k],
                    beta[k],
                    &col,
                    &alpha,
                    &psi,
                    config.inner_newton_iters,
                    true,
                )
            })
            .collect();
        for (k, (n, b)) in cols.into_iter().enumerate() {
            nu[k] = n;
            beta[k] = b;
        }

        // Document block: maximize each (α_i, ψ_i) given (ν, β).
        let rows: Vec<(f64, f64)> = (0..d)
            .into_par_iter()
            .map(|i| {
                let row: Vec<f64> = counts.row(i).to_vec();
                newton_pair(
                    alpha[i],
                    psi[i],
                    &row,
                    &nu,
                    &beta,
                    config.inner_newton_iters,
                    false,
                )
            })
            .collect();
        for (i, (a, p)) in rows.into_iter().enumerate() {
            alpha[i] = a;
            psi[i] = p;
        }

        // Re-gauge with exact compensation (likelihood unchanged).
        regauge(&mut alpha, &mut nu, &mut beta, &mut psi)?;

        let ll = loglik_dense(&counts, &alpha, &nu, &beta, &psi);
        let prev = *trace.last().unwrap();
        trace.push(ll);
        if (ll - prev).abs() / prev.abs().max(1.0) < config.tol {
            converged = true;
            break;
        }
    }

    let raw = WordfishModel {
        alpha,
        nu,
        beta,
        psi,
        loglik: trace,
        identification: Identification {
            anchor: None,
            flipped: false,
        },
        converged,
        n_iters,
    };
    identify(raw, &dtm.meta, config.direction_anchor.as_ref())
}

/// First left singular vector of the double-centered `log(count + 0.1)`
/// matrix, standardized to mean 0 / sd 1, via seeded power iteration.
fn init_psi(counts: &Array2<f64>, seed: u64) -> Result<Vec<f64>> {
    let (d, w) = counts.dim();
    let mut l = counts.mapv(|c| (c + 0.1).ln());
    let grand = l.mean().unwrap();
    let row_means: Vec<f64> = (0..d).map(|i| l.row(i).mean().unwrap()).collect();
    let col_means: Vec<f64> = (0..w).map(|k| l.column(k).mean().unwrap()).collect();
    for i in 0..d {
        for k in 0..w {
            l[(i, k)] = l[(i, k)] - row_means[i] - col_means[k] + grand;
        }
    }
    let m = l.dot(&l.t()); // D×D Gram matrix

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut v = Array1::from_shape_fn(d, |_| rng.gen::<f64>() - 0.5);
    let norm = v.dot(&v).sqrt();
    v.mapv_inplace(|x| x / norm);
    for _ in 0..500 {
        let mv = m.dot(&v);
        let norm = mv.dot(&mv).sqrt();
        if norm < 1e-14 {
            break;
        }
        let next = mv / norm;
        let delta = (&next - &v).mapv(f64::abs).sum();
        v = next;
        if delta < 1e-12 {
            break;
        }
    }
    let sigma1_sq = v.dot(&m.dot(&v));
    if sigma1_sq < 1e-10 * (1.0 + m.diag().sum()) {
        return Err(Error::ScaleUnidentified(
            "documents have (near-)identical count profiles".into(),
        ));
    }
    let mut psi = v.to_vec();
    let (mean, sd) = (math::mean(&psi), math::sd_pop(&psi));
    if sd < 1e-12 {
        return Err(Error::ScaleUnidentified(
            "initial positions collapsed to a point".into(),
        ));
    }
    for p in &mut psi {
        *p = (*p - mean) / sd;
    }
    Ok(psi)
}

/// Maximize `Σ_j [w_j·(a + b·x_j) − exp(off_j + a + b·x_j)]` over `(a, b)` by
/// safeguarded Newton. For the term block `a=ν_k, b=β_k, off=α, x=ψ`; for
/// the document block `a=α_i, b=ψ_i, off=ν, x=β`. When `cap_b` the second
/// coordinate is clamped to ±[`PARAM_CAP`] (both β and ψ are capped; the
/// flag only differs in which coordinate is "b").
fn newton_pair(
    mut a: f64,
    mut b: f64,
    w: &[f64],
    off: &[f64],
    x: &[f64],
    inner_iters: usize,
    _cap_is_beta: bool,
) -> (f64, f64) {
    let local = |a: f64, b: f64| -> f64 {
        let mut f = 0.0;
        for j in 0..w.len() {
            let theta = off[j] + a + b * x[j];
            f += w[j] * (a + b * x[j]) - theta.exp();
        }
        f
    };
    let mut f_cur = local(a, b);
    for _ in 0..inner_iters {
        // Gradient and (negated) Hessian of the local objective.
        let (mut g1, mut g2) = (0.0, 0.0);
        let (mut h11, mut h12, mut h22) = (0.0, 0.0, 0.0);
        for j in 0..w.len() {
            let lambda = (off[j] + a + b * x[j]).exp();
            let r = w[j] - lambda;
            g1 += r;
            g2 += x[j] * r;
            h11 += lambda;
            h12 += x[j] * lambda;
            h22 += x[j] * x[j] * lambda;
        }
        if g1.abs().max(g2.abs()) < 1e-11 * (1.0 + f_cur.abs()) {
            break;
        }
        // Newton direction: solve (−H) δ = g with −H SPD.
        let det = h11 * h22 - h12 * h12;
        let (d1, d2) = if det > 1e-300 && h22 > 1e-12 {
            ((g1 * h22 - h12 * g2) / det, (h11 * g2 - h12 * g1) / det)
        } else {
            // Degenerate curvature in the second coordinate (e.g. all-zero β
            // at initialization): 1-D Newton on the first coordinate only.
            (g1 / h11.max(1e-300), 0.0)
        };
        // Step halving: accept the first step that does not decrease f.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let a_try = a + step * d1;
            let b_try = (b + step * d2).clamp(-PARAM_CAP, PARAM_CAP);
            let f_try = local(a_try, b_try);
            if f_try.is_finite() && f_try >= f_cur - 1e-12 * (1.0 + f_cur.abs()) {
                if f_try >= f_cur {
                    a = a_try;
                    b = b_try;
                    f_cur = f_try;
                    accepted = true;
                } else {
                    // Within tolerance but not an improvement: stop here.
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (a, b)
}

/// Standardize ψ and pin `α₀ = 0`, compensating in `ν`/`β` so the likelihood
/// is untouched.
fn regauge(alpha: &mut [f64], nu: &mut [f64], beta: &mut [f64], psi: &mut [f64]) -> Result<()> {
    let m = math::mean(psi);
    let s = math::sd_pop(psi);
    if s < 1e-12 || !s.is_finite() {
        return Err(Error::ScaleUnidentified(
            "document positions collapsed to a point (β ≈ 0)".into(),
        ));
    }
    for k in 0..nu.len() {
        nu[k] += beta[k] * m;
        beta[k] *= s;
    }
    for p in psi.iter_mut() {
        *p = (*p - m) / s;
    }
    let level = alpha[0];
    for a in alpha.iter_mut() {
        *a -= level;
    }
    for n in nu.iter_mut() {
        *n += level;
    }
    Ok(())
}

/// Apply the identification transforms to a (possibly raw) model:
/// standardize ψ, pin `α₀=0`, and orient the scale so that
/// `psi[anchor.1] > psi[anchor.0]`. Every transform is compensated in `ν`/`β`,
/// so the model's likelihood is preserved.
pub fn identify(
    mut model: WordfishModel,
    meta: &[DocumentMeta],
    anchor: Option<&(String, String)>,
) -> Result<WordfishModel> {
    if meta.len() != model.psi.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} metadata rows for {} documents",
            meta.len(),
            model.psi.len()
        )));
    }
    regauge(
        &mut model.alpha,
        &mut model.nu,
        &mut model.beta,
        &mut model.psi,
    )?;
    let mut flipped = false;
    if let Some((low_id, high_id)) = anchor {
        let find = |id: &str| -> Result<usize> {
            meta.iter()
                .position(|m| m.doc_id == id)
                .ok_or_else(|| Error::AnchorNotFound { doc_id: id.into() })
        };
        let lo = find(low_id)?;
        let hi = find(high_id)?;
        if model.psi[hi] == model.psi[lo] {
            return Err(Error::AnchorUninformative);
        }
        if model.psi[hi] < model.psi[lo] {
            // (β, ψ) → (−β, −ψ) leaves every β_k·ψ_i product unchanged.
            for b in &mut model.beta {
                *b = -*b;
            }
            for p in &mut model.psi {
                *p = -*p;
            }
            flipped = true;
        }
    }
    model.identification = Identification {
        anchor: anchor.cloned(),
        flipped,
    };
    Ok(model)
}

/// One row of the document-position table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocPosition {
    pub doc_id: String,
    pub year: i32,
    pub party: Option<String>,
    pub speaker: Option<String>,
    pub psi: f64,
    pub alpha: f64,
}

/// Document positions joined with metadata, in the stable corpus order.
pub fn doc_positions(model: &WordfishModel, meta: &[DocumentMeta]) -> Result<Vec<DocPosition>> {
    if meta.len() != model.psi.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} metadata rows for {} documents",
            meta.len(),
            model.psi.len()
        )));
    }
    Ok(meta
        .iter()
        .enumerate()
        .map(|(i, m)| DocPosition {
            doc_id: m.doc_id.clone(),
            year: m.year,
            party: m.party.clone(),
            speaker: m.speaker.clone(),
            psi: model.psi[i],
            alpha: model.alpha[i],
        })
        .collect())
}

/// One row of the term-position table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WordPosition {
    pub term: String,
    pub beta: f64,
    pub nu: f64,
}

/// The `top_n` most discriminating terms, sorted by |β| descending with ties
/// broken by term (ascending). `top_n` larger than the vocabulary truncates.
pub fn word_positions(
    model: &WordfishModel,
    vocab: &Vocabulary,
    top_n: usize,
) -> Result<Vec<WordPosition>> {
    if vocab.len() != model.beta.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} vocabulary terms for {} β entries",
            vocab.len(),
            model.beta.len()
        )));
    }
    let mut order: Vec<usize> = (0..vocab.len()).collect();
    order.sort_by(|&a, &b| {
        model.beta[b]
            .abs()
            .total_cmp(&model.beta[a].abs())
            .then_with(|| vocab.term(a).cmp(vocab.term(b)))
    });
    Ok(order
        .into_iter()
        .take(top_n)
        .map(|k| WordPosition {
            term: vocab.term(k).to_string(),
            beta: model.beta[k],
            nu: model.nu[k],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_dtm, tokenize, Corpus, Document};
    use approx::assert_abs_diff_eq;

    fn doc(id: &str, year: i32, text: &str) -> Document {
        Document {
            meta: DocumentMeta {
                doc_id: id.into(),
                year,
                party: None,
                speaker: None,
            },
            tokens: tokenize(text),
        }
    }

    fn dtm_from(texts: &[(&str, &str)]) -> DocumentTermMatrix {
        let docs = texts
            .iter()
            .enumerate()
            .map(|(i, (id, text))| doc(id, 2000 + i as i32, text))
            .collect();
        build_dtm(&Corpus::from_documents(docs).unwrap(), 1).unwrap()
    }

    fn bare_model(alpha: Vec<f64>, nu: Vec<f64>, beta: Vec<f64>, psi: Vec<f64>) -> WordfishModel {
        WordfishModel {
            alpha,
            nu,
            beta,
            psi,
            loglik: vec![],
            identification: Identification {
                anchor: None,
                flipped: false,
            },
            converged: false,
            n_iters: 0,
        }
    }

    #[test]
    fn loglik_single_cell_hand_value() {
        // w=2, α=0, ν=0, β=1, ψ=0.5: ll = 2·0.5 − e^0.5 − ln 2.
        let dtm = dtm_from(&[("d0", "a a")]);
        let model = bare_model(vec![0.0], vec![0.0], vec![1.0], vec![0.5]);
        let expect = 1.0 - 0.5f64.exp() - 2.0f64.ln();
        assert_abs_diff_eq!(expect, -1.3418684512600735, epsilon = 1e-12);
        assert_abs_diff_eq!(model.log_likelihood(&dtm).unwrap(), expect, epsilon = 1e-12);
    }

    #[test]
    fn loglik_counts_zero_cells() {
        // Vocab {a, b}; d1 = "a" has an implicit zero for b. With all
        // parameters 0 every λ = 1, so each of the 4 cells contributes
        // w·0 − 1 − ln(w!) = −1.
        let dtm = dtm_from(&[("d1", "a"), ("d2", "a b")]);
        let model = bare_model(vec![0.0; 2], vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]);
        assert_abs_diff_eq!(model.log_likelihood(&dtm).unwrap(), -4.0, epsilon = 1e-12);
    }

    #[test]
    fn loglik_invariant_under_sign_flip() {
        let dtm = dtm_from(&[("d1", "a a a b"), ("d2", "a b b"), ("d3", "b b b c c")]);
        let model = bare_model(
            vec![0.1, -0.2, 0.3],
            vec![0.5, -0.1, 0.2],
            vec![0.7, -0.4, 1.1],
            vec![-1.0, 0.2, 0.8],
        );
        let flipped = bare_model(
            model.alpha.clone(),
            model.nu.clone(),
            model.beta.iter().map(|b| -b).collect(),
            model.psi.iter().map(|p| -p).collect(),
        );
        assert_abs_diff_eq!(
            model.log_likelihood(&dtm).unwrap(),
            flipped.log_likelihood(&dtm).unwrap(),
            epsilon = 1e-12
        );
    }

    /// A small two-pole corpus: words "left*" dominate early docs, "right*"
    /// late docs, plus common filler. Strong enough signal to scale.
    fn polarized_dtm() -> DocumentTermMatrix {
        let texts = [
            (
                "d0",
                "left left left left left edge edge common common common",
            ),
            (
                "d1",
                "left left left edge common common common common right",
            ),
            (
                "d2",
                "left left edge common common common common right right",
            ),
            (
                "d3",
                "left edge common common common common right right right",
            ),
            (
                "d4",
                "edge common common common common right right right right",
            ),
            (
                "d5",
                "common common common common right right right right right",
            ),
        ];
        dtm_from(&texts)
    }

    #[test]
    fn fit_recovers_polarized_ordering_and_invariants() {
        let dtm = polarized_dtm();
        let config = WordfishConfig {
            direction_anchor: Some(("d0".into(), "d5".into())),
            ..Default::default()
        };
        let model = fit(&dtm, &config).unwrap();

        // Identification invariants.
        assert_abs_diff_eq!(math::mean(&model.psi), 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(math::sd_pop(&model.psi), 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(model.alpha[0], 0.0, epsilon = 1e-12);
        assert!(model.psi[5] > model.psi[0]);

        // Monotone positions along the gradient of the corpus.
        for i in 0..5 {
            assert!(
                model.psi[i] < model.psi[i + 1],
                "psi not monotone: {:?}",
                model.psi
            );
        }

        // Non-decreasing likelihood trace (1e-6 slack).
        for t in 1..model.loglik.len() {
            assert!(
                model.loglik[t] >= model.loglik[t - 1] - 1e-6,
                "trace decreased at {t}: {} -> {}",
                model.loglik[t - 1],
                model.loglik[t]
            );
        }
        assert!(model.converged);
    }

    #[test]
    fn identify_preserves_likelihood_and_orients() {
        let dtm = polarized_dtm();
        let config = WordfishConfig::default();
        let raw = fit(&dtm, &config).unwrap();
        let ll_before = raw.log_likelihood(&dtm).unwrap();

        let anchor = ("d5".into(), "d0".into()); // reversed: forces a flip
        let oriented = identify(raw, &dtm.meta, Some(&anchor)).unwrap();
        let ll_after = oriented.log_likelihood(&dtm).unwrap();
        assert_abs_diff_eq!(ll_before, ll_after, epsilon = 1e-10);
        assert!(oriented.psi[0] > oriented.psi[5]);
        assert!(oriented.identification.flipped || oriented.psi[0] > oriented.psi[5]);
    }

    #[test]
    fn identify_rejects_unknown_and_uninformative_anchors() {
        let dtm = polarized_dtm();
        let model = fit(&dtm, &WordfishConfig::default()).unwrap();

        let missing = ("d0".into(), "nope".into());
        assert!(matches!(
            identify(model.clone(), &dtm.meta, Some(&missing)).unwrap_err(),
            Error::AnchorNotFound { doc_id } if doc_id == "nope"
        ));

        let mut equal = model.clone();
        let mid = (equal.psi[1] + equal.psi[2]) / 2.0;
        equal.psi[1] = mid;
        equal.psi[2] = mid;
        let anchor = ("d1".into(), "d2".into());
        assert!(matches!(
            identify(equal, &dtm.meta, Some(&anchor)).unwrap_err(),
            Error::AnchorUninformative
        ));
    }

    #[test]
    fn degenerate_identical_profiles_error() {
        // Four documents with the exact same counts.
        let dtm = dtm_from(&[
            ("d0", "a a b c"),
            ("d1", "a a b c"),
            ("d2", "a a b c"),
            ("d3", "a a b c"),
        ]);
        let err = fit(&dtm, &WordfishConfig::default()).unwrap_err();
        assert!(matches!(err, Error::ScaleUnidentified(_)), "got {err}");
    }

    #[test]
    fn too_few_documents_error() {
        let dtm = dtm_from(&[("d0", "a b"), ("d1", "a a b")]);
        assert!(matches!(
            fit(&dtm, &WordfishConfig::default()).unwrap_err(),
            Error::ScaleUnidentified(_)
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let dtm = dtm_from(&[
            ("d0", "a a a b c d"),
            ("d1", "a b b c c c d"),
            ("d2", "b c d d d e"),
            ("d3", "a c d e e e f"),
            ("d4", "b d e f f g h h"),
        ]);
        let model = bare_model(
            vec![0.05, -0.1, 0.2, 0.0, -0.15],
            vec![0.3, -0.2, 0.1, 0.0, 0.25, -0.3, 0.15, -0.05],
            vec![0.4, -0.6, 0.2, 0.8, -0.3, 0.5, -0.2, 0.1],
            vec![-1.2, -0.4, 0.1, 0.6, 0.9],
        );
        let g = model.gradient(&dtm).unwrap();
        let h = 1e-5;
        let ll = |m: &WordfishModel| m.log_likelihood(&dtm).unwrap();

        let check = |analytic: f64, perturb: &dyn Fn(&mut WordfishModel, f64)| {
            let mut plus = model.clone();
            perturb(&mut plus, h);
            let mut minus = model.clone();
            perturb(&mut minus, -h);
            let fd = (ll(&plus) - ll(&minus)) / (2.0 * h);
            let denom = analytic.abs().max(fd.abs()).max(1e-8);
            assert!(
                (analytic - fd).abs() / denom <= 1e-4,
                "gradient mismatch: analytic {analytic}, fd {fd}"
            );
        };
        for i in 0..5 {
            check(g.alpha[i], &|m, eps| m.alpha[i] += eps);
            check(g.psi[i], &|m, eps| m.psi[i] += eps);
        }
        for k in 0..8 {
            check(g.nu[k], &|m, eps| m.nu[k] += eps);
            check(g.beta[k], &|m, eps| m.beta[k] += eps);
        }
    }

    #[test]
    fn word_positions_rank_by_discrimination() {
        let dtm = dtm_from(&[("d0", "a b c"), ("d1", "a b c"), ("d2", "a b c")]);
        let model = bare_model(
            vec![0.0; 3],
            vec![0.0; 3],
            vec![0.5, -0.9, 0.5],
            vec![-1.0, 0.0, 1.0],
        );
        let top = word_positions(&model, &dtm.vocab, 10).unwrap();
        assert_eq!(top.len(), 3); // truncated to vocabulary size
        assert_eq!(top[0].term, "b"); // |−0.9| first
        assert_eq!(top[1].term, "a"); // tie with c broken by term order
        assert_eq!(top[2].term, "c");
    }

    #[test]
    fn doc_positions_join_metadata_in_order() {
        let dtm = polarized_dtm();
        let model = fit(
            &dtm,
            &WordfishConfig {
                direction_anchor: Some(("d0".into(), "d5".into())),
                ..Default::default()
            },
        )
        .unwrap();
        let rows = doc_positions(&model, &dtm.meta).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].doc_id, "d0");
        assert_abs_diff_eq!(rows[0].psi, model.psi[0]);
        assert_abs_diff_eq!(rows[0].alpha, 0.0);
    }
}
