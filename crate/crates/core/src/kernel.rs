//! Document kernels.
//!
//! Two constructions: a nearest-neighbor kernel over cosine distances on the
//! symmetrized kNN graph, and a must-link kernel over the transitive closure
//! of pairwise constraints. Both certify positive definiteness at
//! construction; the default diagonal is picked by Gershgorin dominance so
//! certification cannot fail unless the caller pins `c` explicitly.

use crate::corpus::{Corpus, Document};
use crate::exec::Executor;
use crate::linalg::{spd_factorize, symmetric_eigenvalues, LinalgError, SpdFactor};
use crate::mat::Mat;
use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use num_traits::Float;

/// Safety margin on the Gershgorin bound for the automatic diagonal.
const AUTO_C_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub enum KernelError {
    /// Cosine distance is undefined for a document with no words.
    ZeroVector { doc: usize },
    KTooLarge { k: usize, num_docs: usize },
    IndexOutOfRange { index: usize, num_docs: usize },
    /// Certification failed; carries a smallest-eigenvalue estimate.
    NotPositiveDefinite { min_eigenvalue: f64 },
    BadParameter { name: &'static str, value: f64 },
    Linalg(LinalgError),
}

impl fmt::Display for KernelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelError::ZeroVector { doc } => {
                write!(f, "document {doc} has a zero count vector; cosine distance undefined")
            }
            KernelError::KTooLarge { k, num_docs } => {
                write!(f, "k must be < D (got k = {k}, D = {num_docs})")
            }
            KernelError::IndexOutOfRange { index, num_docs } => {
                write!(f, "constraint index {index} out of range for {num_docs} documents")
            }
            KernelError::NotPositiveDefinite { min_eigenvalue } => write!(
                f,
                "kernel is not positive definite (smallest eigenvalue ~ {min_eigenvalue:e}); increase c"
            ),
            KernelError::BadParameter { name, value } => {
                write!(f, "kernel parameter {name} must be positive (got {value})")
            }
            KernelError::Linalg(e) => write!(f, "kernel factorization failed: {e}"),
        }
    }
}

impl core::error::Error for KernelError {}

impl From<LinalgError> for KernelError {
    fn from(e: LinalgError) -> Self {
        KernelError::Linalg(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    NearestNeighbor,
    MustLink,
    Identity,
    External,
}

/// Parameters the kernel was built with; `sigma2` only applies to the
/// nearest-neighbor kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub gamma: f64,
    pub c: f64,
    pub sigma2: Option<f64>,
}

/// A certified symmetric positive-definite document kernel.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    values: Mat,
    kind: KernelKind,
    params: KernelParams,
}

impl KernelMatrix {
    pub fn dim(&self) -> usize {
        self.values.rows()
    }

    pub fn values(&self) -> &Mat {
        &self.values
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn params(&self) -> KernelParams {
        self.params
    }

    /// The identity kernel (used by the kernel-identity model variants).
    pub fn identity(d: usize) -> Self {
        KernelMatrix {
            values: Mat::identity(d),
            kind: KernelKind::Identity,
            params: KernelParams { gamma: 0.0, c: 1.0, sigma2: None },
        }
    }

    /// Wraps an externally supplied matrix: symmetrizes, then certifies PD,
    /// adding jitter `ε·I` with `ε = 1e-8·trace/D` at most `max_attempts`
    /// times before giving up.
    pub fn from_external(mut values: Mat, max_attempts: usize) -> Result<Self, KernelError> {
        values.symmetrize();
        let d = values.rows();
        let trace: f64 = (0..d).map(|i| values[(i, i)]).sum();
        let eps = 1e-8 * trace / d.max(1) as f64;
        let mut attempts = 0;
        loop {
            match spd_factorize(&values) {
                Ok(_) => break,
                Err(LinalgError::NotPositiveDefinite { .. }) if attempts < max_attempts && eps > 0.0 => {
                    for i in 0..d {
                        values[(i, i)] += eps;
                    }
                    attempts += 1;
                }
                Err(LinalgError::NotPositiveDefinite { .. }) => {
                    let min_eig = min_eigenvalue_estimate(&values);
                    return Err(KernelError::NotPositiveDefinite { min_eigenvalue: min_eig });
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(KernelMatrix {
            values,
            kind: KernelKind::External,
            params: KernelParams { gamma: 0.0, c: 0.0, sigma2: None },
        })
    }

    /// Cholesky factor of the kernel.
    pub fn factor(&self) -> Result<SpdFactor, KernelError> {
        Ok(spd_factorize(&self.values)?)
    }

    /// Cheap smallest-eigenvalue estimate via inverse power iteration.
    pub fn min_eigenvalue_estimate(&self) -> f64 {
        match spd_factorize(&self.values) {
            Ok(f) => inverse_power_estimate(&f),
            Err(_) => min_eigenvalue_estimate(&self.values),
        }
    }
}

fn min_eigenvalue_estimate(values: &Mat) -> f64 {
    symmetric_eigenvalues(values).map(|d| d[0]).unwrap_or(f64::NAN)
}

fn inverse_power_estimate(f: &SpdFactor) -> f64 {
    use rand::{Rng, SeedableRng};
    let n = f.dim();
    // generic start vector: a structured one (e.g. all-ones on a block
    // kernel) can be orthogonal to the bottom eigenvectors and the iteration
    // would converge to the wrong end of the spectrum
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x3579);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.5).collect();
    let norm = Float::sqrt(crate::mat::dot(&v, &v));
    for x in v.iter_mut() {
        *x /= norm;
    }
    let mut lambda = 0.0;
    for _ in 0..200 {
        let w = f.solve_vec(&v);
        let norm = Float::sqrt(crate::mat::dot(&w, &w));
        if norm == 0.0 || !norm.is_finite() {
            break;
        }
        // Rayleigh quotient of A⁻¹ against the normalized iterate
        let mu = crate::mat::dot(&v, &w);
        let next = 1.0 / mu;
        for (vi, wi) in v.iter_mut().zip(w.iter()) {
            *vi = wi / norm;
        }
        let done = lambda != 0.0 && (next - lambda).abs() <= 1e-12 * next.abs();
        lambda = next;
        if done {
            break;
        }
    }
    lambda
}

/// Cosine distance `1 − xᵀy / √((xᵀx)(yᵀy))`; lies in [0, 1] for count
/// vectors. Errors on an all-zero vector.
pub fn cosine_distance(a: &Document, b: &Document) -> Result<f64, KernelError> {
    cosine_distance_indexed(a, b, 0, 0)
}

fn cosine_distance_indexed(a: &Document, b: &Document, ia: usize, ib: usize) -> Result<f64, KernelError> {
    let na = a.norm_sq();
    let nb = b.norm_sq();
    if na == 0.0 {
        return Err(KernelError::ZeroVector { doc: ia });
    }
    if nb == 0.0 {
        return Err(KernelError::ZeroVector { doc: ib });
    }
    let d = 1.0 - a.dot(b) / Float::sqrt(na * nb);
    Ok(Float::max(d, 0.0))
}

/// Set of unordered must-link pairs over document indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConstraintSet {
    pairs: BTreeSet<(usize, usize)>,
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut s = Self::new();
        for (a, b) in pairs {
            s.insert(a, b);
        }
        s
    }

    pub fn insert(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let p = if a < b { (a, b) } else { (b, a) };
        self.pairs.insert(p);
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.pairs.iter().map(|&(_, b)| b).max()
    }

    /// Transitive closure: every pair of documents connected through a chain
    /// of must-links becomes a direct pair (union-find over components).
    pub fn transitive_closure(&self, num_docs: usize) -> ConstraintSet {
        let mut parent: Vec<usize> = (0..num_docs).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(a, b) in &self.pairs {
            let ra = find(&mut parent, a);
            let rb = find(&mut parent, b);
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for x in 0..num_docs {
            let r = find(&mut parent, x);
            components.entry(r).or_default().push(x);
        }
        let mut closed = ConstraintSet::new();
        for members in components.values() {
            for i in 0..members.len() {
                for j in (i + 1)..members.len() {
                    closed.insert(members[i], members[j]);
                }
            }
        }
        closed
    }
}

/// Every pair of documents sharing a label becomes a must-link pair.
pub fn labels_to_constraints(labels: &[Option<i64>]) -> ConstraintSet {
    let mut by_label: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        if let Some(l) = l {
            by_label.entry(*l).or_default().push(i);
        }
    }
    let mut set = ConstraintSet::new();
    for members in by_label.values() {
        for i in 0..members.len() {
            for j in (i + 1)..members.len() {
                set.insert(members[i], members[j]);
            }
        }
    }
    set
}

/// Diagonal value: explicit, or derived from the off-diagonal row mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiagonalChoice {
    /// Gershgorin rule `c = γ·maxdeg·(1+δ)`, guaranteeing strict diagonal
    /// dominance and hence positive definiteness.
    Auto,
    Explicit(f64),
}

/// Builds the nearest-neighbor kernel: symmetrized kNN graph under cosine
/// similarity, edge weights `γ·exp(−d/(2σ²))`, diagonal `c`.
pub fn build_knn_kernel(
    corpus: &Corpus,
    k: usize,
    gamma: f64,
    sigma2: f64,
    c: DiagonalChoice,
    exec: &impl Executor,
) -> Result<KernelMatrix, KernelError> {
    let d = corpus.num_docs();
    if k >= d {
        return Err(KernelError::KTooLarge { k, num_docs: d });
    }
    check_positive("gamma", gamma)?;
    check_positive("sigma2", sigma2)?;
    if let DiagonalChoice::Explicit(v) = c {
        check_positive("c", v)?;
    }
    for (i, doc) in corpus.docs().iter().enumerate() {
        if doc.norm_sq() == 0.0 {
            return Err(KernelError::ZeroVector { doc: i });
        }
    }

    // k nearest neighbors per document; ties on distance break toward the
    // lower document index so runs are platform-independent.
    let neighbor_lists: Vec<Vec<(usize, f64)>> = exec.map_indexed(d, |i| {
        let mut cands: Vec<(f64, usize)> = Vec::with_capacity(d - 1);
        for j in 0..d {
            if j == i {
                continue;
            }
            let dist = cosine_distance_indexed(corpus.doc(i), corpus.doc(j), i, j)
                .expect("zero vectors rejected above");
            cands.push((dist, j));
        }
        cands.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
        cands.truncate(k);
        cands.into_iter().map(|(dist, j)| (j, dist)).collect()
    });

    // symmetrize the edge set
    let mut edges: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, list) in neighbor_lists.iter().enumerate() {
        for &(j, dist) in list {
            let key = if i < j { (i, j) } else { (j, i) };
            edges.entry(key).or_insert(dist);
        }
    }

    let mut degree = vec![0usize; d];
    for &(i, j) in edges.keys() {
        degree[i] += 1;
        degree[j] += 1;
    }
    let max_degree = degree.iter().copied().max().unwrap_or(0);
    let c_value = match c {
        DiagonalChoice::Explicit(v) => v,
        DiagonalChoice::Auto => gamma * max_degree.max(1) as f64 * (1.0 + AUTO_C_MARGIN),
    };

    let mut values = Mat::zeros(d, d);
    for (&(i, j), &dist) in &edges {
        let w = gamma * Float::exp(-dist / (2.0 * sigma2));
        values[(i, j)] = w;
        values[(j, i)] = w;
    }
    for i in 0..d {
        values[(i, i)] = c_value;
    }

    certify(values, KernelKind::NearestNeighbor, KernelParams {
        gamma,
        c: c_value,
        sigma2: Some(sigma2),
    })
}

/// Builds the must-link kernel: `γ` on transitively closed pairs, `c` on the
/// diagonal, zero elsewhere.
pub fn build_ml_kernel(
    constraints: &ConstraintSet,
    num_docs: usize,
    gamma: f64,
    c: DiagonalChoice,
) -> Result<KernelMatrix, KernelError> {
    check_positive("gamma", gamma)?;
    if let DiagonalChoice::Explicit(v) = c {
        check_positive("c", v)?;
    }
    if let Some(max) = constraints.max_index() {
        if max >= num_docs {
            return Err(KernelError::IndexOutOfRange { index: max, num_docs });
        }
    }
    let closed = constraints.transitive_closure(num_docs);

    let mut degree = vec![0usize; num_docs];
    for (i, j) in closed.pairs() {
        degree[i] += 1;
        degree[j] += 1;
    }
    let max_degree = degree.iter().copied().max().unwrap_or(0);
    let c_value = match c {
        DiagonalChoice::Explicit(v) => v,
        DiagonalChoice::Auto => gamma * max_degree.max(1) as f64 * (1.0 + AUTO_C_MARGIN),
    };

    let mut values = Mat::zeros(num_docs, num_docs);
    for (i, j) in closed.pairs() {
        values[(i, j)] = gamma;
        values[(j, i)] = gamma;
    }
    for i in 0..num_docs {
        values[(i, i)] = c_value;
    }

    certify(values, KernelKind::MustLink, KernelParams { gamma, c: c_value, sigma2: None })
}

fn certify(values: Mat, kind: KernelKind, params: KernelParams) -> Result<KernelMatrix, KernelError> {
    match spd_factorize(&values) {
        Ok(_) => Ok(KernelMatrix { values, kind, params }),
        Err(LinalgError::NotPositiveDefinite { .. }) => {
            let min_eig = min_eigenvalue_estimate(&values);
            Err(KernelError::NotPositiveDefinite { min_eigenvalue: min_eig })
        }
        Err(e) => Err(e.into()),
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<(), KernelError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(KernelError::BadParameter { name, value })
    }
}
