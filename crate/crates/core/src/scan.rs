//! Associative scan for the linear time-varying recursion
//! `x_t = A_t x_{t-1} + b_t`, `x_0 = 0`.
//!
//! Each element is an affine map `x -> A x + b`. Composition is associative,
//! so the prefix maps can be evaluated as a tree. The parallel mode here is a
//! two-level scheme: chunks are reduced concurrently, the chunk summaries go
//! through a Blelloch up/down sweep, then every chunk replays its own
//! recursion from the incoming carry. Only the reduction and the sweep need
//! matrix-matrix products; the replay is matrix-vector only.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::Mat;

/// An affine map usable as a scan element.
pub trait AffineElement: Clone + Send + Sync {
    fn dim(&self) -> usize;

    /// `out = A x + b`.
    fn apply(&self, x: &[f64], out: &mut [f64]);

    /// Composition with `self` applied first and `later` second:
    /// `(later.A * self.A, later.A * self.b + later.b)`.
    fn then(&self, later: &Self) -> Self;

    fn offset(&self) -> &[f64];
}

/// Dense scan element `(A, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePair {
    pub a: Mat,
    pub b: Vec<f64>,
}

impl AffinePair {
    pub fn new(a: Mat, b: Vec<f64>) -> Self {
        debug_assert!(a.is_square() && a.rows() == b.len());
        Self { a, b }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            a: Mat::identity(dim),
            b: vec![0.0; dim],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.iter().all(|x| x.is_finite())
    }
}

/// Compose two elements: `e1` applied first, then `e2`.
pub fn combine(e1: &AffinePair, e2: &AffinePair) -> AffinePair {
    e1.then(e2)
}

impl AffineElement for AffinePair {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.a.matvec_into(x, out);
        for (o, b) in out.iter_mut().zip(&self.b) {
            *o += b;
        }
    }

    fn then(&self, later: &Self) -> Self {
        let d = self.dim();
        let mut a = Mat::zeros(d, d);
        later.a.matmul_into(&self.a, &mut a);
        let mut b = vec![0.0; d];
        later.apply(&self.b, &mut b);
        Self { a, b }
    }

    fn offset(&self) -> &[f64] {
        &self.b
    }
}

/// Scan element with a diagonal transition, `(diag(a), b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagAffinePair {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl DiagAffinePair {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Self {
        debug_assert_eq!(a.len(), b.len());
        Self { a, b }
    }
}

impl AffineElement for DiagAffinePair {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.b.len() {
            out[i] = self.a[i] * x[i] + self.b[i];
        }
    }

    fn then(&self, later: &Self) -> Self {
        let a = self.a.iter().zip(&later.a).map(|(p, q)| p * q).collect();
        let b = (0..self.b.len())
            .map(|i| later.a[i] * self.b[i] + later.b[i])
            .collect();
        Self { a, b }
    }

    fn offset(&self) -> &[f64] {
        &self.b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanMode {
    Sequential,
    #[default]
    Parallel,
}

/// Work counters for one scan call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScanStats {
    /// Element compositions (for dense elements, one `D x D` matmul each).
    pub compositions: usize,
    /// Element applications to a vector (one matvec each).
    pub applications: usize,
}

impl std::ops::AddAssign for ScanStats {
    fn add_assign(&mut self, rhs: Self) {
        self.compositions += rhs.compositions;
        self.applications += rhs.applications;
    }
}

/// Result of a scan: `T` rows of `D` values, row `t-1` holding `x_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanOutput {
    pub values: Vec<f64>,
    pub dim: usize,
}

impl ScanOutput {
    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.values.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// False when the recursion overflowed somewhere.
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }
}

/// Evaluates the recursion with the given mode. Parallel mode uses one chunk
/// per rayon worker.
pub fn affine_scan<E: AffineElement>(elements: &[E], mode: ScanMode) -> ScanOutput {
    match mode {
        ScanMode::Sequential => sequential_scan(elements).0,
        ScanMode::Parallel => parallel_scan(elements, rayon::current_num_threads()).0,
    }
}

pub fn affine_scan_with_chunks<E: AffineElement>(
    elements: &[E],
    mode: ScanMode,
    chunks: Option<usize>,
) -> ScanOutput {
    match mode {
        ScanMode::Sequential => sequential_scan(elements).0,
        ScanMode::Parallel => {
            parallel_scan(elements, chunks.unwrap_or_else(rayon::current_num_threads)).0
        }
    }
}

/// Plain left-to-right recursion. This is the reference for every other mode.
pub fn sequential_scan<E: AffineElement>(elements: &[E]) -> (ScanOutput, ScanStats) {
    let Some(first) = elements.first() else {
        return (
            ScanOutput {
                values: Vec::new(),
                dim: 0,
            },
            ScanStats::default(),
        );
    };
    let d = first.dim();
    let mut values = vec![0.0; elements.len() * d];
    let mut x = vec![0.0; d];
    replay(elements, &mut x, &mut values);
    (
        ScanOutput { values, dim: d },
        ScanStats {
            compositions: 0,
            applications: elements.len(),
        },
    )
}

fn replay<E: AffineElement>(elements: &[E], carry: &mut [f64], out: &mut [f64]) {
    let d = carry.len();
    for (e, row) in elements.iter().zip(out.chunks_exact_mut(d)) {
        e.apply(carry, row);
        carry.copy_from_slice(row);
    }
}

/// Number of compositions a sequential fold of `combine` performs on `t`
/// elements; the baseline for the parallel work bound.
pub fn sequential_fold_compositions(t: usize) -> usize {
    t.saturating_sub(1)
}

/// Chunked scan: reduce chunks, Blelloch sweep over chunk summaries, replay.
pub fn parallel_scan<E: AffineElement>(elements: &[E], chunks: usize) -> (ScanOutput, ScanStats) {
    let t = elements.len();
    if t == 0 {
        return sequential_scan(elements);
    }
    let c = chunks.clamp(1, t);
    if c == 1 {
        return sequential_scan(elements);
    }
    let d = elements[0].dim();
    let bounds = chunk_bounds(t, c);

    // Phase 1: per-chunk summaries.
    let summaries: Vec<(E, usize)> = bounds
        .par_iter()
        .map(|&(lo, hi)| {
            let mut acc = elements[lo].clone();
            for e in &elements[lo + 1..hi] {
                acc = acc.then(e);
            }
            (acc, hi - lo - 1)
        })
        .collect();
    let mut stats = ScanStats::default();
    let mut summary_elems = Vec::with_capacity(c);
    for (e, n) in summaries {
        stats.compositions += n;
        stats.applications += n;
        summary_elems.push(Some(e));
    }

    // Phase 2: exclusive Blelloch scan of the summaries; `None` is the identity.
    let (prefixes, sweep_compositions) = blelloch_exclusive(summary_elems);
    stats.compositions += sweep_compositions;
    stats.applications += sweep_compositions;

    // Phase 3: replay each chunk from its carry. With x_0 = 0 the carry is
    // the offset of the exclusive prefix map.
    let mut values = vec![0.0; t * d];
    let mut slices: Vec<&mut [f64]> = Vec::with_capacity(c);
    let mut rest = values.as_mut_slice();
    for &(lo, hi) in &bounds {
        let (head, tail) = rest.split_at_mut((hi - lo) * d);
        slices.push(head);
        rest = tail;
    }
    slices
        .into_par_iter()
        .zip(bounds.par_iter())
        .zip(prefixes.par_iter())
        .for_each(|((out, &(lo, hi)), prefix)| {
            let mut carry = match prefix {
                Some(p) => p.offset().to_vec(),
                None => vec![0.0; d],
            };
            replay(&elements[lo..hi], &mut carry, out);
        });
    stats.applications += t;

    (ScanOutput { values, dim: d }, stats)
}

fn chunk_bounds(t: usize, c: usize) -> Vec<(usize, usize)> {
    let base = t / c;
    let extra = t % c;
    let mut out = Vec::with_capacity(c);
    let mut lo = 0;
    for i in 0..c {
        let len = base + usize::from(i < extra);
        out.push((lo, lo + len));
        lo += len;
    }
    out
}

fn compose_opt<E: AffineElement>(
    first: &Option<E>,
    later: &Option<E>,
    count: &mut usize,
) -> Option<E> {
    match (first, later) {
        (None, None) => None,
        (Some(a), None) => Some(a.clone()),
        (None, Some(b)) => Some(b.clone()),
        (Some(a), Some(b)) => {
            *count += 1;
            Some(a.then(b))
        }
    }
}

/// Work-efficient exclusive scan over a power-of-two padded tree.
fn blelloch_exclusive<E: AffineElement>(items: Vec<Option<E>>) -> (Vec<Option<E>>, usize) {
    let n = items.len();
    let size = n.next_power_of_two();
    let mut tree = items;
    tree.resize(size, None);
    let mut count = 0;

    let mut stride = 1;
    while stride < size {
        for k in (0..size).step_by(2 * stride) {
            let left = k + stride - 1;
            let right = k + 2 * stride - 1;
            tree[right] = compose_opt(&tree[left], &tree[right], &mut count);
        }
        stride *= 2;
    }

    tree[size - 1] = None;
    let mut stride = size / 2;
    while stride >= 1 {
        for k in (0..size).step_by(2 * stride) {
            let left = k + stride - 1;
            let right = k + 2 * stride - 1;
            let left_sum = tree[left].take();
            let prefix = tree[right].take();
            tree[right] = compose_opt(&prefix, &left_sum, &mut count);
            tree[left] = prefix;
        }
        stride /= 2;
    }
    tree.truncate(n);
    (tree, count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(a: f64, b: f64) -> AffinePair {
        AffinePair::new(Mat::scalar(a), vec![b])
    }

    fn random_pair(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> AffinePair {
        let a = Mat::from_vec(
            d,
            d,
            (0..d * d)
                .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale)
                .collect(),
        );
        let b = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        AffinePair::new(a, b)
    }

    #[test]
    fn identity_is_two_sided_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = random_pair(&mut rng, 3, 1.0);
        let id = AffinePair::identity(3);
        assert_eq!(combine(&id, &e), e);
        assert_eq!(combine(&e, &id), e);
    }

    #[test]
    fn scalar_composition() {
        // 3(2x+1)+1 = 6x+4
        assert_eq!(
            combine(&scalar(2.0, 1.0), &scalar(3.0, 1.0)),
            scalar(6.0, 4.0)
        );
    }

    #[test]
    fn combine_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let (e1, e2, e3) = (
                random_pair(&mut rng, 4, 1.0),
                random_pair(&mut rng, 4, 1.0),
                random_pair(&mut rng, 4, 1.0),
            );
            let l = combine(&combine(&e1, &e2), &e3);
            let r = combine(&e1, &combine(&e2, &e3));
            assert!(l.a.sub(&r.a).unwrap().max_abs() <= 1e-12);
            for (x, y) in l.b.iter().zip(&r.b) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn memoryless_elements_return_offsets() {
        let elems: Vec<_> = (0..5).map(|i| scalar(0.0, i as f64)).collect();
        let out = affine_scan(&elems, ScanMode::Sequential);
        assert_eq!(out.values, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn scalar_recursion() {
        let elems = vec![scalar(2.0, 1.0), scalar(3.0, 1.0)];
        assert_eq!(
            affine_scan(&elems, ScanMode::Sequential).values,
            vec![1.0, 4.0]
        );
        assert_eq!(parallel_scan(&elems, 2).0.values, vec![1.0, 4.0]);
    }

    #[test]
    fn parallel_matches_sequential_large() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let elems: Vec<_> = (0..1023).map(|_| random_pair(&mut rng, 7, 0.3)).collect();
        let (seq, _) = sequential_scan(&elems);
        let scale = 1.0 + seq.values.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        for chunks in [2, 3, 8, 17, 64] {
            let (par, _) = parallel_scan(&elems, chunks);
            let err = seq
                .values
                .iter()
                .zip(&par.values)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err <= 1e-12 * scale, "chunks={chunks} err={err}");
        }
    }

    #[test]
    fn more_chunks_than_elements() {
        let elems = vec![scalar(0.5, 1.0), scalar(2.0, -1.0), scalar(1.5, 0.25)];
        let (seq, _) = sequential_scan(&elems);
        let (par, stats) = parallel_scan(&elems, 16);
        assert_eq!(seq.values, par.values);
        assert!(stats.compositions <= 2 * sequential_fold_compositions(3));
    }

    #[test]
    fn work_bound_on_compositions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for t in [1usize, 2, 3, 5, 16, 100, 257] {
            let elems: Vec<_> = (0..t).map(|_| random_pair(&mut rng, 2, 0.5)).collect();
            for chunks in [1, 2, 3, 4, 7, 32, 300] {
                let (_, stats) = parallel_scan(&elems, chunks);
                assert!(
                    stats.compositions <= 2 * sequential_fold_compositions(t),
                    "t={t} chunks={chunks} {stats:?}"
                );
            }
        }
    }

    #[test]
    fn diagonal_elements_agree_with_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let diag: Vec<DiagAffinePair> = (0..200)
            .map(|_| {
                DiagAffinePair::new(
                    (0..3).map(|_| rng.random::<f64>() * 1.8 - 0.9).collect(),
                    (0..3).map(|_| rng.random::<f64>()).collect(),
                )
            })
            .collect();
        let dense: Vec<AffinePair> = diag
            .iter()
            .map(|e| AffinePair::new(Mat::from_diag(&e.a), e.b.clone()))
            .collect();
        let a = sequential_scan(&diag).0;
        let b = sequential_scan(&dense).0;
        assert_eq!(a.values, b.values);
        let c = parallel_scan(&diag, 5).0;
        for (x, y) in a.values.iter().zip(&c.values) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn overflow_is_visible() {
        let elems: Vec<_> = (0..2000).map(|_| scalar(10.0, 1.0)).collect();
        assert!(!affine_scan(&elems, ScanMode::Sequential).is_finite());
        assert!(!parallel_scan(&elems, 4).0.is_finite());
    }
}
