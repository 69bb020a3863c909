//! Kernel blocks for held-out evaluation.
//!
//! Two ways to get them: carve the train/test blocks out of one kernel built
//! over the full corpus (the cross-validation pipeline; always consistent
//! with training and positive definite), or build cross blocks for fresh
//! test documents against the training corpus with the same kernel
//! parameters (the streaming path; the regression posterior's jitter policy
//! covers the numerics).

use gptm_core::corpus::Corpus;
use gptm_core::kernel::{cosine_distance, ConstraintSet, KernelError};
use gptm_core::mat::Mat;

/// Train/train, test/train, and test/test blocks of a full-corpus kernel.
pub fn blocks_from_full_kernel(
    full: &Mat,
    train_idx: &[usize],
    test_idx: &[usize],
) -> (Mat, Mat, Mat) {
    let k_ff = full.select(train_idx, train_idx);
    let k_sf = full.select(test_idx, train_idx);
    let k_ss = full.select(test_idx, test_idx);
    (k_ff, k_sf, k_ss)
}

/// Nearest-neighbor cross blocks: each test document connects to its `k`
/// nearest training documents under cosine similarity (ties toward the lower
/// index), weights `γ·exp(−d/(2σ²))`; the test/test block is `c·I`.
pub fn nn_test_blocks(
    train: &Corpus,
    test: &Corpus,
    k: usize,
    gamma: f64,
    sigma2: f64,
    c: f64,
) -> Result<(Mat, Mat), KernelError> {
    let d = train.num_docs();
    let m = test.num_docs();
    if k >= d {
        return Err(KernelError::KTooLarge { k, num_docs: d });
    }
    let mut k_sf = Mat::zeros(m, d);
    for i in 0..m {
        let mut cands: Vec<(f64, usize)> = Vec::with_capacity(d);
        for j in 0..d {
            let dist = cosine_distance(test.doc(i), train.doc(j))?;
            cands.push((dist, j));
        }
        cands.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        for &(dist, j) in cands.iter().take(k) {
            k_sf[(i, j)] = gamma * (-dist / (2.0 * sigma2)).exp();
        }
    }
    let k_ss = Mat::identity(m).scale(c);
    Ok((k_sf, k_ss))
}

/// Must-link evaluation blocks: no cross information unless test-side
/// constraints are supplied; those put `γ` on transitively closed test pairs.
pub fn ml_test_blocks(
    test_constraints: Option<&ConstraintSet>,
    num_train: usize,
    num_test: usize,
    gamma: f64,
    c: f64,
) -> Result<(Mat, Mat), KernelError> {
    let k_sf = Mat::zeros(num_test, num_train);
    let mut k_ss = Mat::identity(num_test).scale(c);
    if let Some(set) = test_constraints {
        if let Some(max) = set.max_index() {
            if max >= num_test {
                return Err(KernelError::IndexOutOfRange { index: max, num_docs: num_test });
            }
        }
        for (a, b) in set.transitive_closure(num_test).pairs() {
            k_ss[(a, b)] = gamma;
            k_ss[(b, a)] = gamma;
        }
    }
    Ok((k_sf, k_ss))
}

/// No kernel information at all: zero cross block, identity test block.
pub fn identity_blocks(num_train: usize, num_test: usize) -> (Mat, Mat) {
    (Mat::zeros(num_test, num_train), Mat::identity(num_test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use gptm_core::corpus::Document;

    fn corpus(docs: Vec<Document>, v: usize) -> Corpus {
        let vocab: Vec<String> = (0..v).map(|i| format!("w{i}")).collect();
        Corpus::new(vocab, docs).unwrap()
    }

    #[test]
    fn carved_blocks_match_manual_selection() {
        let full = Mat::from_fn(5, 5, |i, j| (i * 5 + j) as f64);
        let (ff, sf, ss) = blocks_from_full_kernel(&full, &[0, 2, 4], &[1, 3]);
        assert_eq!(ff[(1, 2)], full[(2, 4)]);
        assert_eq!(sf[(0, 1)], full[(1, 2)]);
        assert_eq!(ss[(1, 0)], full[(3, 1)]);
    }

    #[test]
    fn nn_blocks_pick_nearest_training_docs() {
        let train = corpus(
            vec![Document::from_pairs([(0, 3)]), Document::from_pairs([(1, 3)])],
            3,
        );
        let test = corpus(vec![Document::from_pairs([(0, 2), (1, 1)])], 3);
        let (k_sf, k_ss) = nn_test_blocks(&train, &test, 1, 1.0, 1.0, 2.0).unwrap();
        // the test doc is closer to train doc 0
        assert!(k_sf[(0, 0)] > 0.0);
        assert_eq!(k_sf[(0, 1)], 0.0);
        assert_eq!(k_ss, Mat::identity(1).scale(2.0));
    }

    #[test]
    fn ml_blocks_have_zero_cross_information() {
        let (k_sf, k_ss) = ml_test_blocks(None, 4, 2, 0.5, 1.5).unwrap();
        assert_eq!(k_sf, Mat::zeros(2, 4));
        assert_eq!(k_ss, Mat::identity(2).scale(1.5));
    }
}
