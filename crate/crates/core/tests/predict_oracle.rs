//! Held-out inference oracles: GP conditioning against brute-force
//! joint-Gaussian conditioning (with a test-local Gauss-Jordan inverse), the
//! test-mean density against an independent multivariate-normal evaluation,
//! and fixed-point / invariance properties of the inference loop.

use gptm_core::corpus::{Corpus, Document};
use gptm_core::exec::SerialExecutor;
use gptm_core::linalg::spd_factorize;
use gptm_core::mat::Mat;
use gptm_core::predict::{
    f_star_log_density, gp_posterior, infer_test, knn_separability, perplexity_conditional,
    perplexity_joint, TestPosterior,
};
use gptm_core::train::{JitterPolicy, ModelParams, TrainConfig, Variant};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LN_2PI: f64 = 1.8378770664093453;

fn vocab(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("w{i}")).collect()
}

fn random_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.gen::<f64>() * 2.0 - 1.0)
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let m = random_mat(rng, n, n);
    m.mul_transpose(&m).add(&Mat::identity(n).scale(0.5 + n as f64 * 0.1))
}

// test-local Gauss-Jordan inverse
fn invert(a: &Mat) -> Mat {
    let n = a.rows();
    let mut m = a.clone();
    let mut inv = Mat::identity(n);
    for col in 0..n {
        let mut piv = col;
        let mut best = m[(col, col)].abs();
        for row in (col + 1)..n {
            if m[(row, col)].abs() > best {
                best = m[(row, col)].abs();
                piv = row;
            }
        }
        assert!(best > 0.0, "singular matrix in oracle");
        if piv != col {
            for k in 0..n {
                let t = m[(col, k)];
                m[(col, k)] = m[(piv, k)];
                m[(piv, k)] = t;
                let t = inv[(col, k)];
                inv[(col, k)] = inv[(piv, k)];
                inv[(piv, k)] = t;
            }
        }
        let p = m[(col, col)];
        for k in 0..n {
            m[(col, k)] /= p;
            inv[(col, k)] /= p;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = m[(row, col)];
            if f == 0.0 {
                continue;
            }
            for k in 0..n {
                let mv = m[(col, k)];
                let iv = inv[(col, k)];
                m[(row, k)] -= f * mv;
                inv[(row, k)] -= f * iv;
            }
        }
    }
    inv
}

/// GP posterior against brute-force conditioning of a random PD joint kernel
/// over D train + M test points; 100 instances with D, M ≤ 6.
#[test]
fn gp_posterior_matches_joint_conditioning_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4750);
    for trial in 0..100 {
        let d = rng.gen_range(1..=6);
        let m = rng.gen_range(1..=6);
        let k = rng.gen_range(1..=3);
        let joint = random_spd(&mut rng, d + m);
        let train_idx: Vec<usize> = (0..d).collect();
        let test_idx: Vec<usize> = (d..d + m).collect();
        let k_ff = joint.select(&train_idx, &train_idx);
        let k_sf = joint.select(&test_idx, &train_idx);
        let k_ss = joint.select(&test_idx, &test_idx);
        let f = random_mat(&mut rng, k, d);

        let p = gp_posterior(&k_ff, &k_sf, &k_ss, &f, JitterPolicy::default()).unwrap();

        let inv = invert(&k_ff);
        let want_fbar = f.mul(&inv).mul(&k_sf.transpose());
        let want_kbar = k_ss.sub(&k_sf.mul(&inv).mul(&k_sf.transpose()));
        assert!(
            p.f_bar.max_abs_diff(&want_fbar) <= 1e-9,
            "trial {trial}: F̄ off by {}",
            p.f_bar.max_abs_diff(&want_fbar)
        );
        assert!(
            p.k_bar.max_abs_diff(&want_kbar) <= 1e-9,
            "trial {trial}: 𝒦̄ off by {}",
            p.k_bar.max_abs_diff(&want_kbar)
        );
    }
}

/// Log-density of the test means against an independent multivariate-normal
/// evaluation (explicit inverse, log-determinant from eigenvalues).
#[test]
fn f_star_density_matches_mvn_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4d56);
    for _ in 0..50 {
        let k = rng.gen_range(1..=4);
        let m = rng.gen_range(1..=5);
        let k_bar = random_spd(&mut rng, m);
        let f_bar = random_mat(&mut rng, k, m);
        let f_star = random_mat(&mut rng, k, m);
        let posterior = TestPosterior { f_bar: f_bar.clone(), k_bar: k_bar.clone(), f_star: f_bar.clone() };

        let got = f_star_log_density(&posterior, &f_star).unwrap();

        let inv = invert(&k_bar);
        let eigs = gptm_core::linalg::symmetric_eigenvalues(&k_bar).unwrap();
        let log_det: f64 = eigs.iter().map(|e| e.ln()).sum();
        let mut quad = 0.0;
        for i in 0..k {
            for a in 0..m {
                for b in 0..m {
                    quad += (f_star[(i, a)] - f_bar[(i, a)]) * inv[(a, b)] * (f_star[(i, b)] - f_bar[(i, b)]);
                }
            }
        }
        let want = -0.5 * (k * m) as f64 * LN_2PI - 0.5 * k as f64 * log_det - 0.5 * quad;
        assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0));
    }
}

fn toy_model(k: usize, v: usize, d: usize, rng: &mut ChaCha8Rng) -> ModelParams {
    let mut beta = Mat::from_fn(k, v, |_, _| rng.gen::<f64>() + 0.05);
    for i in 0..k {
        let s: f64 = beta.row(i).iter().sum();
        for j in 0..v {
            beta[(i, j)] /= s;
        }
    }
    ModelParams {
        beta,
        sigma: random_spd(rng, k).scale(0.5).add(&Mat::identity(k).scale(0.2)),
        f: random_mat(rng, k, d),
        variant: Variant::Full,
    }
}

/// At convergence the inferred F✳ zeroes the finite-difference gradient of
/// the objective ½‖L−F✳‖²_Σ + ½‖F✳−F̄‖²_𝒦̄.
#[test]
fn inferred_means_zero_the_objective_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4639);
    let k = 2;
    let v = 6;
    let m = 3;
    let model = toy_model(k, v, 4, &mut rng);
    let test = Corpus::new(
        vocab(v),
        vec![
            Document::from_pairs([(0, 3), (2, 1)]),
            Document::from_pairs([(1, 2), (4, 2)]),
            Document::from_pairs([(3, 1), (5, 4)]),
        ],
    )
    .unwrap();
    let k_bar = random_spd(&mut rng, m);
    let posterior = TestPosterior {
        f_bar: random_mat(&mut rng, k, m),
        k_bar: k_bar.clone(),
        f_star: Mat::zeros(k, m),
    };
    let mut config = TrainConfig::new(k, 0);
    config.max_em_iters = 60;
    config.em_rel_tol = 1e-10;
    let (f_star, state) = infer_test(&model, &test, &posterior, &config, &SerialExecutor).unwrap();

    let sf = spd_factorize(&model.sigma).unwrap();
    let kb = spd_factorize(&k_bar).unwrap();
    let l = state.lambda_cols();
    let objective = |f: &Mat| {
        let r1 = l.sub(f);
        let mut q1 = 0.0;
        for j in 0..m {
            q1 += sf.quad_form(&r1.col(j));
        }
        let r2 = f.sub(&posterior.f_bar);
        0.5 * q1 + 0.5 * kb.trace_quad_rows(&r2)
    };
    let h = 1e-6;
    for _ in 0..8 {
        let dir = random_mat(&mut rng, k, m);
        let dir = dir.scale(1.0 / dir.frob_norm());
        let deriv = (objective(&f_star.add(&dir.scale(h))) - objective(&f_star.sub(&dir.scale(h)))) / (2.0 * h);
        assert!(deriv.abs() <= 1e-5, "directional derivative {deriv}");
    }
}

/// A fresh document with no kernel information (zero cross block, so
/// F̄ = 0) gets test means that depend only on its words and Σ — the
/// training means never enter.
#[test]
fn fresh_document_ignores_training_means() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4652);
    let k = 2;
    let v = 5;
    let test = Corpus::new(vocab(v), vec![Document::from_pairs([(0, 4), (3, 2)])]).unwrap();
    let config = TrainConfig::new(k, 0);
    let posterior = TestPosterior {
        f_bar: Mat::zeros(k, 1),
        k_bar: Mat::identity(1),
        f_star: Mat::zeros(k, 1),
    };
    // same (β, Σ), two different training mean matrices F
    let model_a = toy_model(k, v, 4, &mut rng);
    let mut model_b = model_a.clone();
    model_b.f = random_mat(&mut rng, k, 4);
    let (fa, _) = infer_test(&model_a, &test, &posterior, &config, &SerialExecutor).unwrap();
    let (fb, _) = infer_test(&model_b, &test, &posterior, &config, &SerialExecutor).unwrap();
    assert_eq!(fa, fb);
}

/// Perplexities are invariant to the order of the test documents.
#[test]
fn perplexity_invariant_to_document_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x504f);
    let k = 3;
    let v = 8;
    let m = 5;
    let model = toy_model(k, v, 6, &mut rng);
    let docs: Vec<Document> = (0..m)
        .map(|_| {
            let w1 = rng.gen_range(0..v) as u32;
            let w2 = rng.gen_range(0..v) as u32;
            Document::from_pairs([(w1, 1 + rng.gen_range(0..4)), (w2, 1 + rng.gen_range(0..4))])
        })
        .collect();
    let test = Corpus::new(vocab(v), docs.clone()).unwrap();
    let k_bar = random_spd(&mut rng, m);
    let f_bar = random_mat(&mut rng, k, m);
    let posterior = TestPosterior { f_bar: f_bar.clone(), k_bar: k_bar.clone(), f_star: f_bar.clone() };
    let config = TrainConfig::new(k, 0);
    let (f_star, state) = infer_test(&model, &test, &posterior, &config, &SerialExecutor).unwrap();
    let p1 = perplexity_conditional(&model, &test, &f_star, &state).unwrap();
    let pj1 = perplexity_joint(&model, &test, &f_star, &state, &posterior).unwrap();

    // permute documents (and the matching posterior blocks)
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng);
    let docs_p: Vec<Document> = order.iter().map(|&i| docs[i].clone()).collect();
    let test_p = Corpus::new(vocab(v), docs_p).unwrap();
    let k_bar_p = k_bar.select(&order, &order);
    let f_bar_p = {
        let mut f = Mat::zeros(k, m);
        for (new, &old) in order.iter().enumerate() {
            f.set_col(new, &f_bar.col(old));
        }
        f
    };
    let posterior_p = TestPosterior { f_bar: f_bar_p.clone(), k_bar: k_bar_p, f_star: f_bar_p };
    let (f_star_p, state_p) = infer_test(&model, &test_p, &posterior_p, &config, &SerialExecutor).unwrap();
    let p2 = perplexity_conditional(&model, &test_p, &f_star_p, &state_p).unwrap();
    let pj2 = perplexity_joint(&model, &test_p, &f_star_p, &state_p, &posterior_p).unwrap();

    assert!((p1 - p2).abs() <= 1e-9 * p1, "conditional: {p1} vs {p2}");
    assert!((pj1 - pj2).abs() <= 1e-9 * pj1, "joint: {pj1} vs {pj2}");
}

/// Randomly shuffled labels on a symmetric layout score near 1/classes on
/// average (permutation baseline over 100 shuffles).
#[test]
fn knn_separability_permutation_baseline() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4b4e);
    // symmetric ring of 24 points
    let m = 24;
    let emb = Mat::from_fn(2, m, |r, j| {
        let angle = core::f64::consts::TAU * j as f64 / m as f64;
        if r == 0 {
            angle.cos()
        } else {
            angle.sin()
        }
    });
    let classes = 3;
    let mut labels: Vec<i64> = (0..m).map(|i| (i % classes) as i64).collect();
    let mut total = 0.0;
    for _ in 0..100 {
        labels.shuffle(&mut rng);
        total += knn_separability(&emb, &labels).unwrap();
    }
    let mean = total / 100.0;
    let baseline = 1.0 / classes as f64;
    assert!(
        (mean - baseline).abs() < 0.08,
        "mean accuracy {mean} too far from baseline {baseline}"
    );
}
