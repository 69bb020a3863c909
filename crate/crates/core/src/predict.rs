//! Held-out inference and evaluation.
//!
//! Test documents get prior means by GP regression from the training means,
//! then the usual variational machinery runs with (β, Σ) frozen; the
//! test-mean matrix F✳ solves a Sylvester equation against the regression
//! posterior kernel. Perplexities are computed from the per-document bound,
//! so reported numbers upper-bound the true perplexity.

use crate::corpus::Corpus;
use crate::exec::Executor;
use crate::linalg::{real_schur, solve_sylvester, spd_factorize, LinalgError, SpdFactor};
use crate::mat::Mat;
use crate::train::{
    optimize_document, DocVariational, JitterPolicy, ModelParams, TrainConfig, TrainError,
    VariationalState, LN_2PI,
};
use alloc::vec::Vec;
use core::fmt;
use num_traits::Float;

#[derive(Debug, Clone, PartialEq)]
pub enum PredictError {
    /// Regression posterior kernel stayed indefinite through all jitter
    /// escalations.
    PosteriorNotPositiveDefinite { attempts: usize },
    DimensionMismatch { context: &'static str },
    /// Separability needs at least two distinct labels.
    SingleClass,
    Train(TrainError),
    Linalg(LinalgError),
}

impl fmt::Display for PredictError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictError::PosteriorNotPositiveDefinite { attempts } => {
                write!(f, "posterior kernel not positive definite after {attempts} jitter attempts")
            }
            PredictError::DimensionMismatch { context } => write!(f, "dimension mismatch: {context}"),
            PredictError::SingleClass => write!(f, "separability needs at least two classes"),
            PredictError::Train(e) => write!(f, "{e}"),
            PredictError::Linalg(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for PredictError {}

impl From<TrainError> for PredictError {
    fn from(e: TrainError) -> Self {
        PredictError::Train(e)
    }
}

impl From<LinalgError> for PredictError {
    fn from(e: LinalgError) -> Self {
        PredictError::Linalg(e)
    }
}

/// GP-regression outputs for a batch of test documents: prior mean matrix
/// F̄ (K×M), posterior kernel 𝒦̄ (M×M, jitter-certified), and a slot for the
/// optimized test means F✳ ([`gp_posterior`] initializes it to F̄;
/// [`infer_test`] returns the optimized matrix).
#[derive(Debug, Clone)]
pub struct TestPosterior {
    pub f_bar: Mat,
    pub k_bar: Mat,
    pub f_star: Mat,
}

impl TestPosterior {
    pub fn num_test_docs(&self) -> usize {
        self.k_bar.rows()
    }
}

/// Conditions the GP on the training means:
/// `F̄ = F·K_ff⁻¹·K_f✳` and `𝒦̄ = K✳✳ − K✳f·K_ff⁻¹·K_f✳`,
/// both through the Cholesky factor of `K_ff` (no explicit inverse). The
/// Schur complement can come out numerically semidefinite when test points
/// nearly duplicate training points, so `𝒦̄` gets the jitter policy before
/// being returned.
pub fn gp_posterior(
    k_ff: &Mat,
    k_star_f: &Mat,
    k_star_star: &Mat,
    f: &Mat,
    jitter: JitterPolicy,
) -> Result<TestPosterior, PredictError> {
    let d = k_ff.rows();
    let m = k_star_f.rows();
    if k_star_f.cols() != d {
        return Err(PredictError::DimensionMismatch { context: "K_star_f columns != K_ff dim" });
    }
    if k_star_star.rows() != m || k_star_star.cols() != m {
        return Err(PredictError::DimensionMismatch { context: "K_star_star is not M×M" });
    }
    if f.cols() != d {
        return Err(PredictError::DimensionMismatch { context: "F columns != K_ff dim" });
    }
    let ff = spd_factorize(k_ff)?;
    // X = K_ff⁻¹ K_f✳  (D×M)
    let x = ff.solve_mat(&k_star_f.transpose());
    let f_bar = f.mul(&x);
    let mut k_bar = k_star_star.sub(&k_star_f.mul(&x));
    k_bar.symmetrize();

    let trace: f64 = (0..m).map(|i| k_bar[(i, i)]).sum();
    let eps = jitter.rel_eps * trace / m.max(1) as f64;
    let mut attempts = 0;
    loop {
        match spd_factorize(&k_bar) {
            Ok(_) => break,
            Err(LinalgError::NotPositiveDefinite { .. }) if attempts < jitter.max_attempts && eps > 0.0 => {
                for i in 0..m {
                    k_bar[(i, i)] += eps;
                }
                attempts += 1;
            }
            Err(LinalgError::NotPositiveDefinite { .. }) => {
                return Err(PredictError::PosteriorNotPositiveDefinite { attempts });
            }
            Err(e) => return Err(e.into()),
        }
    }

    let f_star = f_bar.clone();
    Ok(TestPosterior { f_bar, k_bar, f_star })
}

/// Test-side inference with `(β, Σ)` frozen: alternates per-document E-steps
/// against `μ_d = F✳e_d` with the Sylvester solve
/// `ΣF✳ + F✳𝒦̄ = L𝒦̄ + ΣF̄` (the first-order condition of the objective
/// `½‖L−F✳‖²_Σ + ½‖F✳−F̄‖²_𝒦̄`), until that objective's change drops below
/// `em_rel_tol`.
pub fn infer_test(
    model: &ModelParams,
    test_corpus: &Corpus,
    posterior: &TestPosterior,
    config: &TrainConfig,
    exec: &impl Executor,
) -> Result<(Mat, VariationalState), PredictError> {
    let m = test_corpus.num_docs();
    if posterior.num_test_docs() != m {
        return Err(PredictError::DimensionMismatch { context: "posterior dim != test corpus size" });
    }
    if model.vocab_size() != test_corpus.vocab_size() {
        return Err(PredictError::DimensionMismatch { context: "model vocabulary != test corpus vocabulary" });
    }
    let sigma_factor = spd_factorize(&model.sigma)?;
    let kbar_factor = spd_factorize(&posterior.k_bar)?;
    let kbar_schur = real_schur(&posterior.k_bar)?;

    let mut f_star = posterior.f_bar.clone();
    let mut state: Option<VariationalState> = None;
    let mut prev_obj = f64::INFINITY;

    for _ in 0..config.max_em_iters {
        let outcomes: Vec<Result<DocVariational, TrainError>> = exec.map_indexed(m, |idx| {
            let mu = f_star.col(idx);
            let init = state.as_ref().map(|s| &s.docs[idx]);
            optimize_document(test_corpus.doc(idx), &mu, &sigma_factor, &model.beta, config, init)
                .map(|o| o.var)
        });
        let mut docs = Vec::with_capacity(m);
        for o in outcomes {
            docs.push(o?);
        }
        let new_state = VariationalState { docs };

        // Sylvester step for the test means
        let l = new_state.lambda_cols();
        let c = l.mul(&posterior.k_bar).add(&model.sigma.mul(&posterior.f_bar));
        f_star = solve_sylvester(&model.sigma, &posterior.k_bar, &c, Some(&kbar_schur))?;

        // ½‖L − F✳‖²_Σ + ½‖F✳ − F̄‖²_𝒦̄, the piece of the bound that ties the
        // solve to the E-step; its stabilization is the stopping signal.
        let resid_l = l.sub(&f_star);
        let resid_prior = f_star.sub(&posterior.f_bar);
        let obj = 0.5 * sigma_transposed_quad(&sigma_factor, &resid_l)
            + 0.5 * kbar_factor.trace_quad_rows(&resid_prior);

        state = Some(new_state);
        if (prev_obj - obj).abs() < config.em_rel_tol * (1.0 + obj.abs()) {
            prev_obj = obj;
            break;
        }
        prev_obj = obj;
    }
    let _ = prev_obj;

    Ok((f_star, state.expect("at least one outer iteration runs")))
}

// Tr(Rᵀ Σ⁻¹ R) for K×M residuals: quadratic form per column.
fn sigma_transposed_quad(sigma_factor: &SpdFactor, r: &Mat) -> f64 {
    let mut s = 0.0;
    for j in 0..r.cols() {
        let col = r.col(j);
        s += sigma_factor.quad_form(&col);
    }
    s
}

// Per-document evaluation bound. For K >= 2 this is the training bound with
// the document's converged ζ. A single topic makes the log-normalizer linear
// (the z-term is exactly zero), so the relaxation is bypassed and the bound
// is exact there.
fn eval_doc_bound(
    model: &ModelParams,
    sigma_factor: &SpdFactor,
    doc: &crate::corpus::Document,
    var: &DocVariational,
    mu: &[f64],
) -> f64 {
    let k = model.n_topics();
    if k == 1 {
        let r = var.lambda[0] - mu[0];
        let quad = sigma_factor.quad_form(&[r]);
        let trace = var.nu2[0] * sigma_factor.inv_diag()[0];
        let eta = -0.5 * (sigma_factor.log_det() + LN_2PI + trace + quad);
        let h = 0.5 * (Float::ln(var.nu2[0]) + LN_2PI + 1.0);
        let mut words = 0.0;
        for &(w, cnt) in doc.entries() {
            words += cnt as f64 * Float::ln(model.beta[(0, w as usize)]);
        }
        eta + h + words
    } else {
        crate::train::document_bound(
            &var.lambda,
            &var.nu2,
            var.zeta,
            &var.phi,
            sigma_factor,
            mu,
            doc,
            &model.beta,
        )
    }
}

/// Conditional perplexity `exp(−Σ_d log p(w_d|F✳) / Σ_d N_d)` with each
/// `log p(w_d|F✳)` replaced by the per-document bound. An upper bound on the
/// true perplexity.
pub fn perplexity_conditional(
    model: &ModelParams,
    test_corpus: &Corpus,
    f_star: &Mat,
    state: &VariationalState,
) -> Result<f64, PredictError> {
    let sigma_factor = spd_factorize(&model.sigma)?;
    let mut log_lik = 0.0;
    let mut n_total = 0.0;
    for (idx, (doc, var)) in test_corpus.docs().iter().zip(state.docs.iter()).enumerate() {
        let mu = f_star.col(idx);
        log_lik += eval_doc_bound(model, &sigma_factor, doc, var, &mu);
        n_total += doc.total_words() as f64;
    }
    Ok(Float::exp(-log_lik / n_total))
}

/// Log-density of the test means under the regression posterior: each row of
/// F✳ is Gaussian with mean the matching row of F̄ and covariance 𝒦̄.
pub fn f_star_log_density(posterior: &TestPosterior, f_star: &Mat) -> Result<f64, PredictError> {
    let k = f_star.rows() as f64;
    let m = posterior.num_test_docs() as f64;
    let factor = spd_factorize(&posterior.k_bar)?;
    let resid = f_star.sub(&posterior.f_bar);
    let quad = factor.trace_quad_rows(&resid);
    Ok(-0.5 * k * m * LN_2PI - 0.5 * k * factor.log_det() - 0.5 * quad)
}

/// Joint perplexity: the conditional bound plus the log-density of F✳ under
/// the GP regression posterior, per Σ_d N_d words.
pub fn perplexity_joint(
    model: &ModelParams,
    test_corpus: &Corpus,
    f_star: &Mat,
    state: &VariationalState,
    posterior: &TestPosterior,
) -> Result<f64, PredictError> {
    let sigma_factor = spd_factorize(&model.sigma)?;
    let mut log_lik = f_star_log_density(posterior, f_star)?;
    let mut n_total = 0.0;
    for (idx, (doc, var)) in test_corpus.docs().iter().zip(state.docs.iter()).enumerate() {
        let mu = f_star.col(idx);
        log_lik += eval_doc_bound(model, &sigma_factor, doc, var, &mu);
        n_total += doc.total_words() as f64;
    }
    Ok(Float::exp(-log_lik / n_total))
}

/// Leave-one-out 1-nearest-neighbor accuracy of the embedding columns under
/// Euclidean distance; distance ties break toward the lower index.
pub fn knn_separability(embedding: &Mat, labels: &[i64]) -> Result<f64, PredictError> {
    let m = embedding.cols();
    if labels.len() != m {
        return Err(PredictError::DimensionMismatch { context: "labels length != embedding columns" });
    }
    let distinct: alloc::collections::BTreeSet<i64> = labels.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(PredictError::SingleClass);
    }
    let mut correct = 0usize;
    for i in 0..m {
        let mut best_j = usize::MAX;
        let mut best_d = f64::INFINITY;
        for j in 0..m {
            if j == i {
                continue;
            }
            let mut dist = 0.0;
            for r in 0..embedding.rows() {
                let diff = embedding[(r, i)] - embedding[(r, j)];
                dist += diff * diff;
            }
            if dist < best_d {
                best_d = dist;
                best_j = j;
            }
        }
        if labels[best_j] == labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::exec::SerialExecutor;
    use crate::train::Variant;
    use alloc::format;
    use alloc::string::String;
    use alloc::vec;
    use alloc::vec::Vec;

    fn vocab(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("w{i}")).collect()
    }

    #[test]
    fn gp_posterior_uncorrelated_test_point() {
        // K_star_f = 0 → F̄ = 0 and 𝒦̄ = K_star_star
        let k_ff = Mat::identity(3).scale(2.0);
        let k_sf = Mat::zeros(2, 3);
        let k_ss = Mat::identity(2).scale(1.5);
        let f = Mat::from_fn(2, 3, |i, j| (i + j) as f64);
        let p = gp_posterior(&k_ff, &k_sf, &k_ss, &f, JitterPolicy::default()).unwrap();
        assert_eq!(p.f_bar, Mat::zeros(2, 2));
        assert_eq!(p.k_bar, k_ss);
    }

    #[test]
    fn gp_posterior_scalar_analytic() {
        // D = M = 1, K_ff = 1, K_sf = 0.5, K_ss = 1 → f̄ = 0.5 f, 𝒦̄ = 0.75
        let p = gp_posterior(
            &Mat::from_rows(&[&[1.0]]),
            &Mat::from_rows(&[&[0.5]]),
            &Mat::from_rows(&[&[1.0]]),
            &Mat::from_rows(&[&[2.0]]),
            JitterPolicy::default(),
        )
        .unwrap();
        assert!((p.f_bar[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((p.k_bar[(0, 0)] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn f_star_density_analytic() {
        // M = 1, 𝒦̄ = 1, unit residual column → −(K/2)·log 2π − 1/2
        let posterior = TestPosterior {
            f_bar: Mat::zeros(3, 1),
            k_bar: Mat::identity(1),
            f_star: Mat::zeros(3, 1),
        };
        let mut f_star = Mat::zeros(3, 1);
        f_star[(1, 0)] = 1.0;
        let lp = f_star_log_density(&posterior, &f_star).unwrap();
        assert!((lp - (-1.5 * LN_2PI - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn f_star_density_maximized_at_mean() {
        let posterior = TestPosterior {
            f_bar: Mat::from_fn(2, 2, |i, j| (i + j) as f64 * 0.3),
            k_bar: Mat::from_rows(&[&[1.0, 0.2], &[0.2, 0.8]]),
            f_star: Mat::zeros(2, 2),
        };
        let at_mean = f_star_log_density(&posterior, &posterior.f_bar.clone()).unwrap();
        let shifted = posterior.f_bar.add(&Mat::from_fn(2, 2, |_, _| 0.3));
        let off_mean = f_star_log_density(&posterior, &shifted).unwrap();
        assert!(at_mean > off_mean);
        let factor = spd_factorize(&posterior.k_bar).unwrap();
        let want = -0.5 * 2.0 * 2.0 * LN_2PI - 0.5 * 2.0 * factor.log_det();
        assert!((at_mean - want).abs() < 1e-12);
    }

    #[test]
    fn infer_identity_posterior_fixed_point() {
        // Σ = I, 𝒦̄ = I → F✳ = (L + F̄)/2 after the solve
        let model = ModelParams {
            beta: Mat::from_rows(&[&[0.8, 0.2], &[0.3, 0.7]]),
            sigma: Mat::identity(2),
            f: Mat::zeros(2, 3),
            variant: Variant::Full,
        };
        let test = Corpus::new(
            vocab(2),
            vec![Document::from_pairs([(0, 3)]), Document::from_pairs([(1, 2)])],
        )
        .unwrap();
        let posterior = TestPosterior {
            f_bar: Mat::zeros(2, 2),
            k_bar: Mat::identity(2),
            f_star: Mat::zeros(2, 2),
        };
        let config = TrainConfig::new(2, 0);
        let (f_star, state) = infer_test(&model, &test, &posterior, &config, &SerialExecutor).unwrap();
        let l = state.lambda_cols();
        let expected = l.add(&posterior.f_bar).scale(0.5);
        assert!(f_star.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn single_topic_uniform_perplexity_is_vocab_size() {
        let v = 7;
        let model = ModelParams {
            beta: Mat::from_fn(1, v, |_, _| 1.0 / v as f64),
            sigma: Mat::identity(1),
            f: Mat::zeros(1, 4),
            variant: Variant::Full,
        };
        let test = Corpus::new(
            vocab(v),
            vec![
                Document::from_pairs([(0, 3), (2, 1)]),
                Document::from_pairs([(4, 2), (6, 5)]),
            ],
        )
        .unwrap();
        let posterior = TestPosterior {
            f_bar: Mat::zeros(1, 2),
            k_bar: Mat::identity(2),
            f_star: Mat::zeros(1, 2),
        };
        let config = TrainConfig::new(1, 0);
        let (f_star, state) = infer_test(&model, &test, &posterior, &config, &SerialExecutor).unwrap();
        let perp = perplexity_conditional(&model, &test, &f_star, &state).unwrap();
        assert!(
            (perp - v as f64).abs() <= 1e-9 * v as f64,
            "perplexity {perp} should equal V = {v}"
        );
    }

    #[test]
    fn single_word_vocabulary_perplexity_is_one() {
        let model = ModelParams {
            beta: Mat::from_rows(&[&[1.0]]),
            sigma: Mat::identity(1),
            f: Mat::zeros(1, 1),
            variant: Variant::Full,
        };
        let test = Corpus::new(vocab(1), vec![Document::from_pairs([(0, 4)])]).unwrap();
        let posterior = TestPosterior {
            f_bar: Mat::zeros(1, 1),
            k_bar: Mat::identity(1),
            f_star: Mat::zeros(1, 1),
        };
        let config = TrainConfig::new(1, 0);
        let (f_star, state) = infer_test(&model, &test, &posterior, &config, &SerialExecutor).unwrap();
        let perp = perplexity_conditional(&model, &test, &f_star, &state).unwrap();
        assert!((perp - 1.0).abs() < 1e-9);
    }

    #[test]
    fn knn_separated_clouds_are_perfect() {
        let mut emb = Mat::zeros(2, 6);
        for i in 0..3 {
            emb[(0, i)] = 10.0 + i as f64 * 0.1;
        }
        for i in 3..6 {
            emb[(0, i)] = -10.0 - i as f64 * 0.1;
        }
        let labels = vec![1, 1, 1, 2, 2, 2];
        assert_eq!(knn_separability(&emb, &labels).unwrap(), 1.0);
    }

    #[test]
    fn knn_adversarial_alternating_layout() {
        // each point's nearest neighbor belongs to the other class
        let mut emb = Mat::zeros(1, 4);
        for i in 0..4 {
            emb[(0, i)] = i as f64;
        }
        let labels = vec![1, 2, 1, 2];
        assert_eq!(knn_separability(&emb, &labels).unwrap(), 0.0);
    }

    #[test]
    fn knn_single_class_errors() {
        let emb = Mat::zeros(1, 3);
        assert!(matches!(knn_separability(&emb, &[1, 1, 1]), Err(PredictError::SingleClass)));
    }
}
