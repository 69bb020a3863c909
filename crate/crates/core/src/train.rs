//! Variational EM training.
//!
//! Per document the posterior over the logistic-normal natural parameters is
//! a fully factored Gaussian `q(η_i) = N(λ_i, ν_i²)` plus discrete topic
//! assignments `q(z_n) = φ_n`; the intractable log-normalizer is handled by
//! the standard first-order bound with per-document parameter ζ. The E-step
//! runs coordinate ascent (closed-form ζ and φ, backtracking gradient ascent
//! on λ and log ν²); the M-step has closed forms for β and Σ and solves a
//! Sylvester equation for the GP mean matrix F.

use crate::corpus::{Corpus, Document};
use crate::exec::Executor;
use crate::kernel::{KernelKind, KernelMatrix};
use crate::linalg::{real_schur, solve_sylvester, spd_factorize, LinalgError, SchurFactor, SpdFactor};
use crate::mat::{dot, Mat};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use num_traits::Float;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const LN_2PI: f64 = 1.8378770664093453;
/// Floor applied to every β cell before row normalization.
pub const BETA_FLOOR: f64 = 1e-10;
/// Floor applied to the per-topic variational variances.
pub const NU2_FLOOR: f64 = 1e-10;

const ARMIJO_C1: f64 = 1e-4;
const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    KernelDimMismatch { kernel_dim: usize, num_docs: usize },
    BadConfig { what: &'static str },
    /// Every topic gives zero probability to this word.
    DegeneratePhiRow { word_id: u32 },
    /// The bound went non-finite; carries the iteration it happened in.
    NonFiniteElbo { iteration: usize, last_elbo: f64 },
    SigmaNotPositiveDefinite { attempts: usize },
    Linalg(LinalgError),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::KernelDimMismatch { kernel_dim, num_docs } => {
                write!(f, "kernel is {kernel_dim}x{kernel_dim} but corpus has {num_docs} documents")
            }
            TrainError::BadConfig { what } => write!(f, "invalid configuration: {what}"),
            TrainError::DegeneratePhiRow { word_id } => {
                write!(f, "word id {word_id} has zero probability under every topic")
            }
            TrainError::NonFiniteElbo { iteration, last_elbo } => write!(
                f,
                "bound became non-finite at EM iteration {iteration} (last finite value {last_elbo})"
            ),
            TrainError::SigmaNotPositiveDefinite { attempts } => {
                write!(f, "topic covariance not positive definite after {attempts} jitter attempts")
            }
            TrainError::Linalg(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for TrainError {}

impl From<LinalgError> for TrainError {
    fn from(e: LinalgError) -> Self {
        TrainError::Linalg(e)
    }
}

/// Model ablations: the topic covariance and/or the document kernel can be
/// pinned to the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Learn Σ, use the supplied kernel.
    Full,
    /// Σ = I held fixed.
    SigmaIdentity,
    /// Kernel = I held fixed.
    KernelIdentity,
    /// Both Σ = I and kernel = I.
    SigmaKernelIdentity,
}

impl Variant {
    pub fn sigma_fixed_identity(self) -> bool {
        matches!(self, Variant::SigmaIdentity | Variant::SigmaKernelIdentity)
    }

    pub fn kernel_fixed_identity(self) -> bool {
        matches!(self, Variant::KernelIdentity | Variant::SigmaKernelIdentity)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::SigmaIdentity => "si",
            Variant::KernelIdentity => "ki",
            Variant::SigmaKernelIdentity => "siki",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        match s {
            "full" => Some(Variant::Full),
            "si" => Some(Variant::SigmaIdentity),
            "ki" => Some(Variant::KernelIdentity),
            "siki" => Some(Variant::SigmaKernelIdentity),
            _ => None,
        }
    }
}

/// Jitter escalation used when a nominally PD matrix fails to factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterPolicy {
    /// Jitter is `rel_eps·trace/n` per attempt.
    pub rel_eps: f64,
    pub max_attempts: usize,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        JitterPolicy { rel_eps: 1e-8, max_attempts: 3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub n_topics: usize,
    pub max_em_iters: usize,
    /// Stop when the relative bound change falls below this.
    pub em_rel_tol: f64,
    pub estep_max_iters: usize,
    /// Per-document stop threshold on bound improvement.
    pub estep_tol: f64,
    pub seed: u64,
    pub variant: Variant,
    pub jitter: JitterPolicy,
}

impl TrainConfig {
    pub fn new(n_topics: usize, seed: u64) -> Self {
        TrainConfig {
            n_topics,
            max_em_iters: 50,
            em_rel_tol: 1e-6,
            estep_max_iters: 100,
            estep_tol: 1e-8,
            seed,
            variant: Variant::Full,
            jitter: JitterPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.n_topics == 0 {
            return Err(TrainError::BadConfig { what: "n_topics must be >= 1" });
        }
        if self.em_rel_tol.is_nan() || self.em_rel_tol <= 0.0 || self.estep_tol.is_nan() || self.estep_tol <= 0.0 {
            return Err(TrainError::BadConfig { what: "tolerances must be positive" });
        }
        if self.max_em_iters == 0 || self.estep_max_iters == 0 {
            return Err(TrainError::BadConfig { what: "iteration caps must be >= 1" });
        }
        Ok(())
    }
}

/// Model parameters: topic-word matrix, topic covariance, GP mean matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// K×V, rows on the simplex.
    pub beta: Mat,
    /// K×K symmetric positive definite.
    pub sigma: Mat,
    /// K×D column-per-document prior means.
    pub f: Mat,
    pub variant: Variant,
}

impl ModelParams {
    pub fn n_topics(&self) -> usize {
        self.beta.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.beta.cols()
    }

    pub fn num_docs(&self) -> usize {
        self.f.cols()
    }
}

/// Per-document variational parameters. φ has one row per *distinct* word
/// (positions sharing a word id share a row); row order follows the
/// document's sorted entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DocVariational {
    pub lambda: Vec<f64>,
    pub nu2: Vec<f64>,
    pub phi: Mat,
    pub zeta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    pub docs: Vec<DocVariational>,
}

impl VariationalState {
    /// D×K matrix with one λ row per document (checkpoint layout).
    pub fn lambda_rows(&self) -> Mat {
        let d = self.docs.len();
        let k = self.docs.first().map(|v| v.lambda.len()).unwrap_or(0);
        Mat::from_fn(d, k, |i, j| self.docs[i].lambda[j])
    }

    /// K×D matrix L = [λ_1 … λ_D] with documents as columns.
    pub fn lambda_cols(&self) -> Mat {
        let d = self.docs.len();
        let k = self.docs.first().map(|v| v.lambda.len()).unwrap_or(0);
        Mat::from_fn(k, d, |i, j| self.docs[j].lambda[i])
    }

    pub fn nu2_rows(&self) -> Mat {
        let d = self.docs.len();
        let k = self.docs.first().map(|v| v.nu2.len()).unwrap_or(0);
        Mat::from_fn(d, k, |i, j| self.docs[i].nu2[j])
    }
}

/// Softmax onto the topic simplex, max-subtracted for overflow safety.
pub fn softmax_theta(eta: &[f64]) -> Vec<f64> {
    let m = eta.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut out: Vec<f64> = eta.iter().map(|&e| Float::exp(e - m)).collect();
    let s: f64 = out.iter().sum();
    for o in out.iter_mut() {
        *o /= s;
    }
    out
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| Float::exp(x - m)).sum();
    m + Float::ln(s)
}

/// ζ = Σ_i exp(λ_i + ν_i²/2), evaluated through log-sum-exp.
pub fn update_zeta(lambda: &[f64], nu2: &[f64]) -> f64 {
    Float::exp(log_zeta(lambda, nu2))
}

fn log_zeta(lambda: &[f64], nu2: &[f64]) -> f64 {
    let xs: Vec<f64> = lambda.iter().zip(nu2.iter()).map(|(&l, &n)| l + 0.5 * n).collect();
    log_sum_exp(&xs)
}

/// φ update: for each distinct word j, φ_i ∝ exp(λ_i)·β_{i,j}, computed in
/// log space and normalized per row.
pub fn update_phi(lambda: &[f64], beta: &Mat, doc: &Document) -> Result<Mat, TrainError> {
    let k = lambda.len();
    let u = doc.distinct_words();
    let mut phi = Mat::zeros(u, k);
    let mut logs = vec![0.0f64; k];
    for (row, &(w, _)) in doc.entries().iter().enumerate() {
        for (i, l) in logs.iter_mut().enumerate() {
            *l = lambda[i] + Float::ln(beta[(i, w as usize)]);
        }
        let norm = log_sum_exp(&logs);
        if !norm.is_finite() {
            return Err(TrainError::DegeneratePhiRow { word_id: w });
        }
        for i in 0..k {
            phi[(row, i)] = Float::exp(logs[i] - norm);
        }
    }
    Ok(phi)
}

// Count-weighted sufficient statistics of φ for one document.
#[derive(Debug, Clone)]
struct PhiStats {
    /// Σ_n φ_{n,i} with positions weighted by counts.
    weighted_sum: Vec<f64>,
    /// Σ_n Σ_i φ log β over positions.
    word_loglik: f64,
    /// −Σ_n Σ_i φ log φ over positions.
    entropy: f64,
}

fn phi_stats(phi: &Mat, doc: &Document, beta: &Mat) -> PhiStats {
    let k = phi.cols();
    let mut weighted_sum = vec![0.0f64; k];
    let mut word_loglik = 0.0;
    let mut entropy = 0.0;
    for (row, &(w, cnt)) in doc.entries().iter().enumerate() {
        let c = cnt as f64;
        for i in 0..k {
            let p = phi[(row, i)];
            if p > 0.0 {
                weighted_sum[i] += c * p;
                word_loglik += c * p * Float::ln(beta[(i, w as usize)]);
                entropy -= c * p * Float::ln(p);
            }
        }
    }
    PhiStats { weighted_sum, word_loglik, entropy }
}

// The per-document lower bound (all terms except the GP prior over F),
// with ζ passed in log form.
fn doc_bound_inner(
    lambda: &[f64],
    nu2: &[f64],
    lz: f64,
    stats: &PhiStats,
    sigma_factor: &SpdFactor,
    mu: &[f64],
    n_words: f64,
) -> f64 {
    let k = lambda.len();
    let r: Vec<f64> = lambda.iter().zip(mu.iter()).map(|(&l, &m)| l - m).collect();
    let quad = sigma_factor.quad_form(&r);
    let mut trace = 0.0;
    for (i, &n) in nu2.iter().enumerate() {
        trace += n * sigma_factor.inv_diag()[i];
    }
    let eta_term = -0.5 * (sigma_factor.log_det() + k as f64 * LN_2PI + trace + quad);

    let lse = log_zeta(lambda, nu2);
    let z_term = dot(lambda, &stats.weighted_sum) - n_words * (Float::exp(lse - lz) - 1.0 + lz);

    let mut h = 0.0;
    for &n in nu2 {
        h += 0.5 * (Float::ln(n) + LN_2PI + 1.0);
    }
    h += stats.entropy;

    eta_term + z_term + stats.word_loglik + h
}

/// Per-document variational bound: the document's share of the full training
/// bound (everything except the GP prior over F). This is the quantity the
/// E-step ascends and the finite-difference oracles differentiate.
#[allow(clippy::too_many_arguments)]
pub fn document_bound(
    lambda: &[f64],
    nu2: &[f64],
    zeta: f64,
    phi: &Mat,
    sigma_factor: &SpdFactor,
    mu: &[f64],
    doc: &Document,
    beta: &Mat,
) -> f64 {
    let stats = phi_stats(phi, doc, beta);
    doc_bound_inner(lambda, nu2, Float::ln(zeta), &stats, sigma_factor, mu, doc.total_words() as f64)
}

/// Gradients of the per-document bound in λ and ν² (holding ζ and φ fixed):
///
/// `g_λ = −Σ⁻¹(λ − μ) + Σ_n φ_n − (N/ζ)·exp(λ + ν²/2)`
/// `g_{ν_i²} = −(Σ⁻¹)_{ii}/2 − (N/2ζ)·exp(λ_i + ν_i²/2) + 1/(2ν_i²)`
///
/// Σ⁻¹ is applied through the factorization; positions are count-weighted.
pub fn doc_gradients(
    lambda: &[f64],
    nu2: &[f64],
    zeta: f64,
    phi: &Mat,
    sigma_factor: &SpdFactor,
    mu: &[f64],
    doc: &Document,
) -> (Vec<f64>, Vec<f64>) {
    let k = lambda.len();
    let mut weighted_sum = vec![0.0f64; k];
    for (row, &(_, cnt)) in doc.entries().iter().enumerate() {
        let c = cnt as f64;
        for i in 0..k {
            weighted_sum[i] += c * phi[(row, i)];
        }
    }
    gradients_inner(
        lambda,
        nu2,
        Float::ln(zeta),
        &weighted_sum,
        sigma_factor,
        mu,
        doc.total_words() as f64,
    )
}

fn gradients_inner(
    lambda: &[f64],
    nu2: &[f64],
    lz: f64,
    weighted_sum: &[f64],
    sigma_factor: &SpdFactor,
    mu: &[f64],
    n_words: f64,
) -> (Vec<f64>, Vec<f64>) {
    let k = lambda.len();
    let r: Vec<f64> = lambda.iter().zip(mu.iter()).map(|(&l, &m)| l - m).collect();
    let sir = sigma_factor.solve_vec(&r);
    let mut g_lambda = vec![0.0f64; k];
    let mut g_nu2 = vec![0.0f64; k];
    for i in 0..k {
        let e = Float::exp(lambda[i] + 0.5 * nu2[i] - lz);
        g_lambda[i] = -sir[i] + weighted_sum[i] - n_words * e;
        g_nu2[i] = -0.5 * sigma_factor.inv_diag()[i] - 0.5 * n_words * e + 0.5 / nu2[i];
    }
    (g_lambda, g_nu2)
}

/// Result of optimizing one document's variational parameters.
#[derive(Debug, Clone)]
pub struct DocOutcome {
    pub var: DocVariational,
    pub bound: f64,
    /// True when a backtracking search ran out of halvings and the point was
    /// kept as-is (not fatal).
    pub line_search_failed: bool,
}

/// Coordinate ascent on one document: closed-form ζ and φ refreshes followed
/// by Armijo-backtracked gradient steps on λ and on log ν², until the bound
/// improvement drops below `config.estep_tol` or the iteration cap.
///
/// With a single topic the log-normalizer is linear in η, so the posterior is
/// the prior and the optimum is closed form: λ = μ, ν² = Σ, φ ≡ 1.
pub fn optimize_document(
    doc: &Document,
    mu: &[f64],
    sigma_factor: &SpdFactor,
    beta: &Mat,
    config: &TrainConfig,
    init: Option<&DocVariational>,
) -> Result<DocOutcome, TrainError> {
    let k = mu.len();

    if k == 1 {
        let sigma_val = sigma_factor.a_diag()[0];
        let lambda = vec![mu[0]];
        let nu2 = vec![sigma_val];
        let phi = update_phi(&lambda, beta, doc)?;
        let zeta = update_zeta(&lambda, &nu2);
        let stats = phi_stats(&phi, doc, beta);
        let bound = doc_bound_inner(
            &lambda,
            &nu2,
            Float::ln(zeta),
            &stats,
            sigma_factor,
            mu,
            doc.total_words() as f64,
        );
        return Ok(DocOutcome {
            var: DocVariational { lambda, nu2, phi, zeta },
            bound,
            line_search_failed: false,
        });
    }

    let mut lambda = init.map(|v| v.lambda.clone()).unwrap_or_else(|| vec![0.0; k]);
    let mut nu2 = init.map(|v| v.nu2.clone()).unwrap_or_else(|| vec![1.0; k]);
    for n in nu2.iter_mut() {
        *n = Float::max(*n, NU2_FLOOR);
    }
    let n_words = doc.total_words() as f64;

    let mut lz = log_zeta(&lambda, &nu2);
    let mut phi = update_phi(&lambda, beta, doc)?;
    let mut stats = phi_stats(&phi, doc, beta);
    let mut bound = doc_bound_inner(&lambda, &nu2, lz, &stats, sigma_factor, mu, n_words);
    let mut line_search_failed = false;

    for _pass in 0..config.estep_max_iters {
        lz = log_zeta(&lambda, &nu2);
        phi = update_phi(&lambda, beta, doc)?;
        stats = phi_stats(&phi, doc, beta);

        let (g_lambda, _) = gradients_inner(&lambda, &nu2, lz, &stats.weighted_sum, sigma_factor, mu, n_words);

        // ascend λ
        let slope: f64 = g_lambda.iter().map(|g| g * g).sum();
        if slope > 0.0 {
            let f0 = doc_bound_inner(&lambda, &nu2, lz, &stats, sigma_factor, mu, n_words);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..=MAX_HALVINGS {
                let trial: Vec<f64> = lambda.iter().zip(g_lambda.iter()).map(|(&l, &g)| l + t * g).collect();
                let ft = doc_bound_inner(&trial, &nu2, lz, &stats, sigma_factor, mu, n_words);
                if ft.is_finite() && ft >= f0 + ARMIJO_C1 * t * slope {
                    lambda = trial;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                line_search_failed = true;
                break;
            }
        }

        // ascend log ν² (chain rule keeps the variances positive)
        let (_, g_nu2) = gradients_inner(&lambda, &nu2, lz, &stats.weighted_sum, sigma_factor, mu, n_words);
        let dir: Vec<f64> = g_nu2.iter().zip(nu2.iter()).map(|(&g, &n)| g * n).collect();
        let slope: f64 = dir.iter().map(|d| d * d).sum();
        if slope > 0.0 {
            let f0 = doc_bound_inner(&lambda, &nu2, lz, &stats, sigma_factor, mu, n_words);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..=MAX_HALVINGS {
                let trial: Vec<f64> = nu2
                    .iter()
                    .zip(dir.iter())
                    .map(|(&n, &d)| Float::max(Float::exp(Float::ln(n) + t * d), NU2_FLOOR))
                    .collect();
                let ft = doc_bound_inner(&lambda, &trial, lz, &stats, sigma_factor, mu, n_words);
                if ft.is_finite() && ft >= f0 + ARMIJO_C1 * t * slope {
                    nu2 = trial;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                line_search_failed = true;
                break;
            }
        }

        let new_bound = doc_bound_inner(&lambda, &nu2, lz, &stats, sigma_factor, mu, n_words);
        let improved = new_bound - bound;
        bound = new_bound;
        if improved.abs() < config.estep_tol * (1.0 + bound.abs()) {
            break;
        }
    }

    // leave ζ and φ consistent with the final λ, ν²
    lz = log_zeta(&lambda, &nu2);
    phi = update_phi(&lambda, beta, doc)?;
    stats = phi_stats(&phi, doc, beta);
    bound = doc_bound_inner(&lambda, &nu2, lz, &stats, sigma_factor, mu, n_words);
    let zeta = Float::exp(lz);

    Ok(DocOutcome {
        var: DocVariational { lambda, nu2, phi, zeta },
        bound,
        line_search_failed,
    })
}

/// β update: `β_{i,j} ∝ Σ_d Σ_n φ_{dn,i}·[w_dn = j]`, with a small floor on
/// every cell before row normalization.
pub fn update_beta(state: &VariationalState, corpus: &Corpus) -> Mat {
    let k = state.docs.first().map(|v| v.lambda.len()).unwrap_or(0);
    let v = corpus.vocab_size();
    let mut beta = Mat::zeros(k, v);
    for (doc, var) in corpus.docs().iter().zip(state.docs.iter()) {
        for (row, &(w, cnt)) in doc.entries().iter().enumerate() {
            let c = cnt as f64;
            for i in 0..k {
                beta[(i, w as usize)] += c * var.phi[(row, i)];
            }
        }
    }
    for i in 0..k {
        let row = beta.row_mut(i);
        let mut sum = 0.0;
        for cell in row.iter_mut() {
            *cell += BETA_FLOOR;
            sum += *cell;
        }
        for cell in row.iter_mut() {
            *cell /= sum;
        }
    }
    beta
}

/// Σ update: `Σ = (1/D)(Σ_d diag(ν_d²) + Σ_d (λ_d − Fe_d)(λ_d − Fe_d)ᵀ)`,
/// symmetrized afterwards to remove rounding drift.
pub fn update_sigma(state: &VariationalState, f: &Mat) -> Mat {
    let d = state.docs.len();
    let k = f.rows();
    let mut sigma = Mat::zeros(k, k);
    for (idx, var) in state.docs.iter().enumerate() {
        for i in 0..k {
            sigma[(i, i)] += var.nu2[i];
        }
        let r: Vec<f64> = (0..k).map(|i| var.lambda[i] - f[(i, idx)]).collect();
        for i in 0..k {
            for j in 0..k {
                sigma[(i, j)] += r[i] * r[j];
            }
        }
    }
    let mut sigma = sigma.scale(1.0 / d as f64);
    sigma.symmetrize();
    sigma
}

/// F update: solves `ΣF + F𝒦 = L𝒦` with `L = [λ_1 … λ_D]`, reusing the
/// kernel's Schur factor across EM iterations.
pub fn update_f(
    state: &VariationalState,
    sigma: &Mat,
    kernel: &Mat,
    cached: Option<&SchurFactor>,
) -> Result<Mat, LinalgError> {
    let l = state.lambda_cols();
    let c = l.mul(kernel);
    solve_sylvester(sigma, kernel, &c, cached)
}

/// The full training bound: GP prior term plus each document's share.
pub fn elbo(
    model: &ModelParams,
    state: &VariationalState,
    corpus: &Corpus,
    kernel_factor: &SpdFactor,
    sigma_factor: &SpdFactor,
) -> f64 {
    let k = model.n_topics() as f64;
    let d = model.num_docs() as f64;
    let gp_term = -0.5 * k * kernel_factor.log_det()
        - 0.5 * k * d * LN_2PI
        - 0.5 * kernel_factor.trace_quad_rows(&model.f);

    let mut total = gp_term;
    for (idx, (doc, var)) in corpus.docs().iter().zip(state.docs.iter()).enumerate() {
        let mu = model.f.col(idx);
        total += document_bound(
            &var.lambda,
            &var.nu2,
            var.zeta,
            &var.phi,
            sigma_factor,
            &mu,
            doc,
            &model.beta,
        );
    }
    total
}

/// Training outcome: final parameters, variational state, and the bound
/// recorded after initialization and after every EM iteration.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub model: ModelParams,
    pub state: VariationalState,
    pub elbo_trace: Vec<f64>,
    pub iterations: usize,
    pub line_search_failures: usize,
}

fn certify_sigma(mut sigma: Mat, jitter: JitterPolicy) -> Result<(Mat, SpdFactor), TrainError> {
    let k = sigma.rows();
    let trace: f64 = (0..k).map(|i| sigma[(i, i)]).sum();
    let eps = jitter.rel_eps * trace / k.max(1) as f64;
    let mut attempts = 0;
    loop {
        match spd_factorize(&sigma) {
            Ok(f) => return Ok((sigma, f)),
            Err(LinalgError::NotPositiveDefinite { .. }) if attempts < jitter.max_attempts && eps > 0.0 => {
                for i in 0..k {
                    sigma[(i, i)] += eps;
                }
                attempts += 1;
            }
            Err(LinalgError::NotPositiveDefinite { .. }) => {
                return Err(TrainError::SigmaNotPositiveDefinite { attempts })
            }
            Err(e) => return Err(e.into()),
        }
    }
}

// Seeded β initialization: corpus frequencies with multiplicative jitter,
// floored and row-normalized. λ = 0, ν² = 1, Σ = I, F = 0.
fn init_model(corpus: &Corpus, config: &TrainConfig, num_docs: usize) -> ModelParams {
    let k = config.n_topics;
    let v = corpus.vocab_size();
    let freq = corpus.word_frequencies();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut beta = Mat::zeros(k, v);
    for i in 0..k {
        let mut sum = 0.0;
        for j in 0..v {
            let u: f64 = rng.gen();
            let cell = (freq[j] + 1.0 / v as f64) * (0.5 + u) + BETA_FLOOR;
            beta[(i, j)] = cell;
            sum += cell;
        }
        for j in 0..v {
            beta[(i, j)] /= sum;
        }
    }
    ModelParams {
        beta,
        sigma: Mat::identity(k),
        f: Mat::zeros(k, num_docs),
        variant: config.variant,
    }
}

/// Variational EM: alternates full E-sweeps with the (β, Σ, F) M-step until
/// the relative bound change drops below `em_rel_tol`. Deterministic given
/// the seed; the executor only affects wall-clock time.
pub fn train(
    corpus: &Corpus,
    kernel: &KernelMatrix,
    config: &TrainConfig,
    exec: &impl Executor,
) -> Result<TrainResult, TrainError> {
    config.validate()?;
    let d = corpus.num_docs();

    // identity-kernel variants override whatever kernel was supplied
    let kernel_owned;
    let kernel_eff: &KernelMatrix =
        if config.variant.kernel_fixed_identity() && kernel.kind() != KernelKind::Identity {
            kernel_owned = KernelMatrix::identity(d);
            &kernel_owned
        } else {
            kernel
        };
    if kernel_eff.dim() != d {
        return Err(TrainError::KernelDimMismatch { kernel_dim: kernel_eff.dim(), num_docs: d });
    }

    let kernel_factor = spd_factorize(kernel_eff.values())?;
    let kernel_schur = real_schur(kernel_eff.values())?;

    let mut model = init_model(corpus, config, d);
    let mut sigma_factor = spd_factorize(&model.sigma)?;

    // initial variational state: λ = 0, ν² = 1, φ and ζ consistent with them
    let mut state = VariationalState {
        docs: corpus
            .docs()
            .iter()
            .map(|doc| {
                let lambda = vec![0.0; config.n_topics];
                let nu2 = vec![1.0; config.n_topics];
                let phi = update_phi(&lambda, &model.beta, doc)?;
                let zeta = update_zeta(&lambda, &nu2);
                Ok(DocVariational { lambda, nu2, phi, zeta })
            })
            .collect::<Result<Vec<_>, TrainError>>()?,
    };

    let mut elbo_trace = vec![elbo(&model, &state, corpus, &kernel_factor, &sigma_factor)];
    let mut line_search_failures = 0usize;
    let mut iterations = 0usize;

    for it in 1..=config.max_em_iters {
        // E-step (embarrassingly parallel; results collected in doc order)
        let outcomes: Vec<Result<DocOutcome, TrainError>> = exec.map_indexed(d, |idx| {
            let mu = model.f.col(idx);
            optimize_document(corpus.doc(idx), &mu, &sigma_factor, &model.beta, config, Some(&state.docs[idx]))
        });
        let mut docs = Vec::with_capacity(d);
        for outcome in outcomes {
            let outcome = outcome?;
            if outcome.line_search_failed {
                line_search_failures += 1;
            }
            docs.push(outcome.var);
        }
        state = VariationalState { docs };

        // M-step: β, then (Σ, F) with one extra alternation pass to settle
        // the Σ–F coupling; every update is an exact conditional maximizer.
        model.beta = update_beta(&state, corpus);
        if config.variant.sigma_fixed_identity() {
            model.f = update_f(&state, &model.sigma, kernel_eff.values(), Some(&kernel_schur))?;
        } else {
            model.sigma = update_sigma(&state, &model.f);
            model.f = update_f(&state, &model.sigma, kernel_eff.values(), Some(&kernel_schur))?;
            model.sigma = update_sigma(&state, &model.f);
            model.f = update_f(&state, &model.sigma, kernel_eff.values(), Some(&kernel_schur))?;
            model.sigma = update_sigma(&state, &model.f);
        }
        let (sigma, factor) = certify_sigma(model.sigma, config.jitter)?;
        model.sigma = sigma;
        sigma_factor = factor;

        let value = elbo(&model, &state, corpus, &kernel_factor, &sigma_factor);
        iterations = it;
        if !value.is_finite() {
            return Err(TrainError::NonFiniteElbo {
                iteration: it,
                last_elbo: *elbo_trace.last().unwrap(),
            });
        }
        let prev = *elbo_trace.last().unwrap();
        elbo_trace.push(value);
        if (value - prev).abs() < config.em_rel_tol * prev.abs() {
            break;
        }
    }

    Ok(TrainResult { model, state, elbo_trace, iterations, line_search_failures })
}
