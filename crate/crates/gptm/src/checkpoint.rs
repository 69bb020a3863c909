//! Checkpoint directories: beta.csv (K×V), sigma.csv (K×K), F.csv (K×D),
//! lambda.csv (D×K), nu2.csv (D×K), and meta.json with dimensions, variant,
//! seed, config echo, and the final bound.

use crate::matio::{read_matrix_csv, write_matrix_csv};
use crate::IoFormatError;
use gptm_core::mat::Mat;
use gptm_core::train::{ModelParams, TrainConfig, TrainResult, Variant};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub max_em_iters: usize,
    pub em_rel_tol: f64,
    pub estep_max_iters: usize,
    pub estep_tol: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub n_topics: usize,
    pub vocab_size: usize,
    pub num_docs: usize,
    pub variant: String,
    pub seed: u64,
    pub final_elbo: f64,
    pub iterations: usize,
    pub line_search_failures: usize,
    pub config: ConfigEcho,
}

pub fn save_checkpoint(
    dir: &Path,
    result: &TrainResult,
    config: &TrainConfig,
) -> Result<(), IoFormatError> {
    fs::create_dir_all(dir).map_err(|e| IoFormatError::io(dir, e))?;
    write_matrix_csv(&result.model.beta, &dir.join("beta.csv"))?;
    write_matrix_csv(&result.model.sigma, &dir.join("sigma.csv"))?;
    write_matrix_csv(&result.model.f, &dir.join("F.csv"))?;
    write_matrix_csv(&result.state.lambda_rows(), &dir.join("lambda.csv"))?;
    write_matrix_csv(&result.state.nu2_rows(), &dir.join("nu2.csv"))?;

    let meta = CheckpointMeta {
        n_topics: result.model.n_topics(),
        vocab_size: result.model.vocab_size(),
        num_docs: result.model.num_docs(),
        variant: result.model.variant.name().to_string(),
        seed: config.seed,
        final_elbo: *result.elbo_trace.last().unwrap_or(&f64::NAN),
        iterations: result.iterations,
        line_search_failures: result.line_search_failures,
        config: ConfigEcho {
            max_em_iters: config.max_em_iters,
            em_rel_tol: config.em_rel_tol,
            estep_max_iters: config.estep_max_iters,
            estep_tol: config.estep_tol,
        },
    };
    let path = dir.join("meta.json");
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| IoFormatError::format(&path, e.to_string()))?;
    fs::write(&path, json + "\n").map_err(|e| IoFormatError::io(&path, e))
}

pub fn write_elbo_trace(trace: &[f64], path: &Path) -> Result<(), IoFormatError> {
    let mut out = String::from("iteration,elbo\n");
    for (i, v) in trace.iter().enumerate() {
        out.push_str(&format!("{i},{v}\n"));
    }
    fs::write(path, out).map_err(|e| IoFormatError::io(path, e))
}

pub struct LoadedCheckpoint {
    pub model: ModelParams,
    pub lambda: Mat,
    pub nu2: Mat,
    pub meta: CheckpointMeta,
}

pub fn load_checkpoint(dir: &Path) -> Result<LoadedCheckpoint, IoFormatError> {
    let meta_path = dir.join("meta.json");
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| IoFormatError::io(&meta_path, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&meta_text)
        .map_err(|e| IoFormatError::format(&meta_path, e.to_string()))?;
    let beta = read_matrix_csv(&dir.join("beta.csv"))?;
    let sigma = read_matrix_csv(&dir.join("sigma.csv"))?;
    let f = read_matrix_csv(&dir.join("F.csv"))?;
    let lambda = read_matrix_csv(&dir.join("lambda.csv"))?;
    let nu2 = read_matrix_csv(&dir.join("nu2.csv"))?;

    let variant = Variant::parse(&meta.variant).ok_or_else(|| {
        IoFormatError::format(&meta_path, format!("unknown variant {:?}", meta.variant))
    })?;
    if beta.rows() != meta.n_topics || beta.cols() != meta.vocab_size {
        return Err(IoFormatError::format(dir.join("beta.csv"), "dimensions disagree with meta.json"));
    }
    if f.rows() != meta.n_topics || f.cols() != meta.num_docs {
        return Err(IoFormatError::format(dir.join("F.csv"), "dimensions disagree with meta.json"));
    }
    Ok(LoadedCheckpoint {
        model: ModelParams { beta, sigma, f, variant },
        lambda,
        nu2,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use gptm_core::corpus::{Corpus, Document};
    use gptm_core::exec::SerialExecutor;
    use gptm_core::kernel::KernelMatrix;
    use gptm_core::train::train;

    #[test]
    fn checkpoint_round_trip() {
        let vocab: Vec<String> = (0..4).map(|i| format!("w{i}")).collect();
        let docs = vec![
            Document::from_pairs([(0, 2), (1, 1)]),
            Document::from_pairs([(2, 3), (3, 1)]),
            Document::from_pairs([(0, 1), (3, 2)]),
        ];
        let corpus = Corpus::new(vocab, docs).unwrap();
        let kernel = KernelMatrix::identity(3);
        let mut config = TrainConfig::new(2, 9);
        config.max_em_iters = 3;
        let result = train(&corpus, &kernel, &config, &SerialExecutor).unwrap();

        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &result, &config).unwrap();
        let loaded = load_checkpoint(dir.path()).unwrap();
        assert_eq!(loaded.model.beta, result.model.beta);
        assert_eq!(loaded.model.sigma, result.model.sigma);
        assert_eq!(loaded.model.f, result.model.f);
        assert_eq!(loaded.lambda, result.state.lambda_rows());
        assert_eq!(loaded.nu2, result.state.nu2_rows());
        assert_eq!(loaded.meta.seed, 9);
        assert_eq!(loaded.meta.variant, "full");
    }
}
