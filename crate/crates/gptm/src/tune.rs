//! Cross-validated grid search over kernel parameters, scored by held-out
//! conditional perplexity. Cells that cannot be built (e.g. k ≥ fold size)
//! are reported as invalid and skipped; anything else that fails aborts the
//! search.

use crate::blocks::blocks_from_full_kernel;
use gptm_core::corpus::Corpus;
use gptm_core::exec::Executor;
use gptm_core::kernel::{
    build_knn_kernel, build_ml_kernel, labels_to_constraints, DiagonalChoice, KernelError,
    KernelMatrix,
};
use gptm_core::predict::{gp_posterior, infer_test, perplexity_conditional};
use gptm_core::train::{train, TrainConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    pub gamma: f64,
    pub sigma2: Option<f64>,
    pub k: Option<usize>,
    pub c: Option<f64>,
}

impl fmt::Display for CellParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "gamma={}", self.gamma)?;
        if let Some(s) = self.sigma2 {
            write!(f, " sigma2={s}")?;
        }
        if let Some(k) = self.k {
            write!(f, " k={k}")?;
        }
        if let Some(c) = self.c {
            write!(f, " c={c}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TuneCell {
    pub params: CellParams,
    /// Mean held-out conditional perplexity, or the reason the cell is
    /// invalid.
    pub outcome: Result<f64, String>,
}

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub cells: Vec<TuneCell>,
    /// Index into `cells` of the lowest-perplexity valid cell.
    pub best: Option<usize>,
    pub folds: usize,
}

#[derive(Debug)]
pub enum TuneError {
    TooFewDocuments { num_docs: usize, folds: usize },
    Fatal { cell: CellParams, message: String },
}

impl fmt::Display for TuneError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TuneError::TooFewDocuments { num_docs, folds } => {
                write!(f, "cannot make {folds} folds from {num_docs} documents")
            }
            TuneError::Fatal { cell, message } => write!(f, "cell [{cell}] failed: {message}"),
        }
    }
}

impl std::error::Error for TuneError {}

/// Seeded fold assignment: shuffled indices cut into `folds` chunks, each
/// sorted back into corpus order.
fn fold_indices(num_docs: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..num_docs).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x666f_6c64);
    order.shuffle(&mut rng);
    let base = num_docs / folds;
    let extra = num_docs % folds;
    let mut out = Vec::with_capacity(folds);
    let mut at = 0;
    for f in 0..folds {
        let take = base + usize::from(f < extra);
        let mut chunk: Vec<usize> = order[at..at + take].to_vec();
        chunk.sort_unstable();
        out.push(chunk);
        at += take;
    }
    out
}

fn cv_perplexity(
    corpus: &Corpus,
    kernel: &KernelMatrix,
    folds: &[Vec<usize>],
    config: &TrainConfig,
    exec: &impl Executor,
) -> Result<f64, String> {
    let num_docs = corpus.num_docs();
    let mut total = 0.0;
    let mut count = 0usize;
    for test_idx in folds {
        let mut is_test = vec![false; num_docs];
        for &i in test_idx {
            is_test[i] = true;
        }
        let train_idx: Vec<usize> = (0..num_docs).filter(|&i| !is_test[i]).collect();
        if train_idx.is_empty() || test_idx.is_empty() {
            return Err("a fold is empty".to_string());
        }
        let train_corpus = corpus.subset(&train_idx);
        let test_corpus = corpus.subset(test_idx);
        let (k_ff, k_sf, k_ss) = blocks_from_full_kernel(kernel.values(), &train_idx, test_idx);
        let fold_kernel = KernelMatrix::from_external(k_ff.clone(), config.jitter.max_attempts)
            .map_err(|e| e.to_string())?;
        let result = train(&train_corpus, &fold_kernel, config, exec).map_err(|e| e.to_string())?;
        let posterior = gp_posterior(&k_ff, &k_sf, &k_ss, &result.model.f, config.jitter)
            .map_err(|e| e.to_string())?;
        let (f_star, state) = infer_test(&result.model, &test_corpus, &posterior, config, exec)
            .map_err(|e| e.to_string())?;
        let perp = perplexity_conditional(&result.model, &test_corpus, &f_star, &state)
            .map_err(|e| e.to_string())?;
        total += perp;
        count += 1;
    }
    Ok(total / count as f64)
}

fn is_invalid_construction(msg: &str) -> bool {
    msg.contains("k must be < D") || msg.contains("not positive definite")
}

fn run_grid(
    corpus: &Corpus,
    cells: Vec<(CellParams, Result<KernelMatrix, KernelError>)>,
    folds: usize,
    config: &TrainConfig,
    exec: &impl Executor,
) -> Result<TuneOutcome, TuneError> {
    let num_docs = corpus.num_docs();
    if folds < 2 || folds > num_docs {
        return Err(TuneError::TooFewDocuments { num_docs, folds });
    }
    let fold_sets = fold_indices(num_docs, folds, config.seed);
    let mut out_cells = Vec::with_capacity(cells.len());
    for (params, built) in cells {
        let outcome = match built {
            Err(e) => {
                let msg = e.to_string();
                if is_invalid_construction(&msg) {
                    Err(msg)
                } else {
                    return Err(TuneError::Fatal { cell: params, message: msg });
                }
            }
            Ok(kernel) => match cv_perplexity(corpus, &kernel, &fold_sets, config, exec) {
                Ok(p) => Ok(p),
                Err(msg) => return Err(TuneError::Fatal { cell: params, message: msg }),
            },
        };
        out_cells.push(TuneCell { params, outcome });
    }
    let best = out_cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.outcome.as_ref().ok().map(|&p| (i, p)))
        .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite perplexities"))
        .map(|(i, _)| i);
    Ok(TuneOutcome { cells: out_cells, best, folds })
}

/// Grid search for the nearest-neighbor kernel over (γ, σ², k).
pub fn tune_nn(
    corpus: &Corpus,
    folds: usize,
    gammas: &[f64],
    sigma2s: &[f64],
    ks: &[usize],
    config: &TrainConfig,
    exec: &impl Executor,
) -> Result<TuneOutcome, TuneError> {
    let mut cells = Vec::new();
    for &gamma in gammas {
        for &sigma2 in sigma2s {
            for &k in ks {
                let built = build_knn_kernel(corpus, k, gamma, sigma2, DiagonalChoice::Auto, exec);
                cells.push((
                    CellParams { gamma, sigma2: Some(sigma2), k: Some(k), c: None },
                    built,
                ));
            }
        }
    }
    run_grid(corpus, cells, folds, config, exec)
}

/// Grid search for the must-link kernel over (γ, c); constraints come from
/// the corpus labels.
pub fn tune_ml(
    corpus: &Corpus,
    folds: usize,
    gammas: &[f64],
    cs: &[f64],
    config: &TrainConfig,
    exec: &impl Executor,
) -> Result<TuneOutcome, TuneError> {
    let constraints = labels_to_constraints(&corpus.labels());
    let mut cells = Vec::new();
    for &gamma in gammas {
        for &c in cs {
            let built = build_ml_kernel(&constraints, corpus.num_docs(), gamma, DiagonalChoice::Explicit(c));
            cells.push((CellParams { gamma, sigma2: None, k: None, c: Some(c) }, built));
        }
    }
    run_grid(corpus, cells, folds, config, exec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use gptm_core::corpus::Document;
    use gptm_core::exec::SerialExecutor;
    use rand::Rng;

    fn small_corpus(seed: u64, d: usize, v: usize) -> Corpus {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let docs: Vec<Document> = (0..d)
            .map(|_| {
                let n = rng.gen_range(3..7);
                Document::from_pairs(
                    (0..n).map(|_| (rng.gen_range(0..v) as u32, rng.gen_range(1..3u32))),
                )
            })
            .collect();
        let vocab: Vec<String> = (0..v).map(|i| format!("w{i}")).collect();
        Corpus::new(vocab, docs).unwrap()
    }

    #[test]
    fn fold_assignment_is_deterministic_and_partitions() {
        let a = fold_indices(10, 3, 5);
        let b = fold_indices(10, 3, 5);
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.into_iter().flatten().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn single_cell_grid_runs_and_selects_it() {
        let corpus = small_corpus(1, 12, 8);
        let mut config = TrainConfig::new(2, 4);
        config.max_em_iters = 3;
        let out = tune_nn(&corpus, 3, &[1.0], &[1.0], &[2], &config, &SerialExecutor).unwrap();
        assert_eq!(out.cells.len(), 1);
        assert_eq!(out.best, Some(0));
        assert!(out.cells[0].outcome.is_ok());
    }

    #[test]
    fn oversized_k_reported_invalid_search_continues() {
        let corpus = small_corpus(2, 8, 6);
        let mut config = TrainConfig::new(2, 4);
        config.max_em_iters = 2;
        let out = tune_nn(&corpus, 2, &[1.0], &[1.0], &[50, 2], &config, &SerialExecutor).unwrap();
        assert!(out.cells[0].outcome.is_err());
        assert!(out.cells[1].outcome.is_ok());
        assert_eq!(out.best, Some(1));
    }

    #[test]
    fn ml_grid_over_gamma_and_c() {
        let mut corpus = small_corpus(9, 12, 8);
        let labels: Vec<Option<i64>> = (0..12).map(|i| Some((i / 4) as i64)).collect();
        corpus = corpus.with_labels(&labels);
        let mut config = TrainConfig::new(2, 2);
        config.max_em_iters = 2;
        let out = tune_ml(&corpus, 3, &[0.5], &[1.0, 2.0], &config, &SerialExecutor).unwrap();
        assert_eq!(out.cells.len(), 2);
        assert!(out.best.is_some());
        for cell in &out.cells {
            assert!(cell.outcome.is_ok(), "{:?}", cell.outcome);
        }
    }

    #[test]
    fn deterministic_winner_given_seed() {
        let corpus = small_corpus(3, 10, 6);
        let mut config = TrainConfig::new(2, 11);
        config.max_em_iters = 2;
        let a = tune_nn(&corpus, 2, &[0.5, 1.0], &[1.0], &[2], &config, &SerialExecutor).unwrap();
        let b = tune_nn(&corpus, 2, &[0.5, 1.0], &[1.0], &[2], &config, &SerialExecutor).unwrap();
        assert_eq!(a.best, b.best);
        for (x, y) in a.cells.iter().zip(b.cells.iter()) {
            assert_eq!(x.outcome.as_ref().ok(), y.outcome.as_ref().ok());
        }
    }
}
