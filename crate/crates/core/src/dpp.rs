//! Determinantal point processes over a pool of embeddings.
//!
//! Kernels are Gaussian L-ensembles with unit diagonal. Exact fixed-size
//! sampling uses the spectral k-DPP sampler (eigendecomposition, elementary
//! symmetric polynomial selection of eigenvectors, then projection-DPP
//! sampling). `dpp_brute_probabilities` enumerates the subset law for small
//! pools and exposes the marginal kernel `B = L (L + I)^-1`, under which
//! `P(S ⊆ Y) = det(B_S)`.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

/// Largest pool `dpp_brute_probabilities` will enumerate.
pub const MAX_ENUMERATION: usize = 12;

const REGULARIZATION: f64 = 1e-10;
const RANK_TOL: f64 = 1e-10;

pub fn pairwise_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if let (Some(a), Some(b)) = (a.as_slice(), b.as_slice()) {
        let mut acc = [0.0f64; 4];
        let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
        let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| (x - y) * (x - y)).sum();
        for (x, y) in ca.zip(cb) {
            for l in 0..4 {
                acc[l] += (x[l] - y[l]) * (x[l] - y[l]);
            }
        }
        return ((acc[0] + acc[1]) + (acc[2] + acc[3]) + tail).sqrt();
    }
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Median of the nonzero pairwise distances.
    Median,
    Fixed(f64),
}

/// Symmetric PSD L-ensemble kernel over a candidate pool.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    l: Array2<f64>,
    item_ids: Vec<usize>,
}

impl KernelMatrix {
    /// Wraps an explicit kernel. Items are numbered `0..M` unless ids are
    /// given.
    pub fn from_matrix(l: Array2<f64>, item_ids: Option<Vec<usize>>) -> Result<Self> {
        let m = l.nrows();
        if l.ncols() != m {
            return Err(Error::Contract(format!("kernel must be square, got {:?}", l.dim())));
        }
        for i in 0..m {
            for j in (i + 1)..m {
                if (l[[i, j]] - l[[j, i]]).abs() > 1e-10 {
                    return Err(Error::Contract(format!("kernel not symmetric at ({i}, {j})")));
                }
            }
        }
        if l.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("kernel entry".into()));
        }
        let item_ids = item_ids.unwrap_or_else(|| (0..m).collect());
        if item_ids.len() != m {
            return Err(Error::Contract("item id count differs from kernel size".into()));
        }
        let kernel = Self { l, item_ids };
        if m > 0 {
            let min = kernel.eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
            if min < -1e-8 {
                return Err(Error::Contract(format!("kernel not PSD (min eigenvalue {min})")));
            }
        }
        Ok(kernel)
    }

    pub fn size(&self) -> usize {
        self.l.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.l
    }

    pub fn item_ids(&self) -> &[usize] {
        &self.item_ids
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        SymmetricEigen::new(to_dmatrix(self.l.view())).eigenvalues.iter().copied().collect()
    }
}

fn to_dmatrix(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Gaussian kernel `L_jl = exp(-d(j,l)^2 / (2 σ^2))` over the rows of `pool`.
pub fn build_kernel(pool: ArrayView2<'_, f64>, item_ids: Vec<usize>, bandwidth: Bandwidth) -> Result<KernelMatrix> {
    let m = pool.nrows();
    if m == 0 {
        return Err(Error::Contract("kernel pool is empty".into()));
    }
    if item_ids.len() != m {
        return Err(Error::Contract("item id count differs from pool size".into()));
    }
    let mut dist = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        for j in (i + 1)..m {
            let d = pairwise_distance(pool.row(i), pool.row(j));
            dist[[i, j]] = d;
            dist[[j, i]] = d;
        }
    }
    let sigma = match bandwidth {
        Bandwidth::Fixed(s) if s > 0.0 && s.is_finite() => s,
        Bandwidth::Fixed(s) => return Err(Error::Param(format!("bandwidth {s} must be positive"))),
        Bandwidth::Median => {
            let mut nonzero: Vec<f64> = (0..m)
                .flat_map(|i| ((i + 1)..m).map(move |j| (i, j)))
                .map(|(i, j)| dist[[i, j]])
                .filter(|&d| d > 0.0)
                .collect();
            if nonzero.is_empty() {
                if m > 1 {
                    log::warn!("all pairwise distances are zero; using bandwidth 1");
                }
                1.0
            } else {
                nonzero.sort_by(f64::total_cmp);
                let k = nonzero.len();
                if k % 2 == 1 {
                    nonzero[k / 2]
                } else {
                    0.5 * (nonzero[k / 2 - 1] + nonzero[k / 2])
                }
            }
        }
    };
    let denom = 2.0 * sigma * sigma;
    let mut l = dist.mapv(|d| (-d * d / denom).exp());
    l.diag_mut().fill(1.0);
    Ok(KernelMatrix { l, item_ids })
}

/// Enumerated law of an L-ensemble over all `2^M` subsets.
#[derive(Debug, Clone)]
pub struct SubsetLaw {
    size: usize,
    /// `probs[mask]` is `P(Y = mask)`; bit `i` set means item `i` is in.
    probs: Vec<f64>,
    /// Marginal kernel `B = L (L + I)^-1`.
    pub marginal: Array2<f64>,
    pub normalizer: f64,
}

fn mask_of(subset: &[usize]) -> usize {
    subset.iter().fold(0usize, |m, &i| m | (1 << i))
}

impl SubsetLaw {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, subset: &[usize]) -> f64 {
        self.probs[mask_of(subset)]
    }

    /// `P(S ⊆ Y)` by summing over supersets.
    pub fn inclusion(&self, subset: &[usize]) -> f64 {
        let s = mask_of(subset);
        self.probs
            .iter()
            .enumerate()
            .filter(|(mask, _)| mask & s == s)
            .map(|(_, p)| p)
            .sum()
    }

    /// `det(B_S)`.
    pub fn marginal_inclusion(&self, subset: &[usize]) -> f64 {
        principal_det(self.marginal.view(), subset)
    }

    /// Law of `Y` conditioned on `|Y| = k`, as `(mask, probability)` pairs in
    /// increasing mask order.
    pub fn conditioned_on_size(&self, k: usize) -> Vec<(usize, f64)> {
        let entries: Vec<(usize, f64)> = self
            .probs
            .iter()
            .enumerate()
            .filter(|(mask, _)| mask.count_ones() as usize == k)
            .map(|(mask, &p)| (mask, p))
            .collect();
        let total: f64 = entries.iter().map(|(_, p)| p).sum();
        entries.into_iter().map(|(mask, p)| (mask, p / total)).collect()
    }
}

fn principal_det(a: ArrayView2<'_, f64>, subset: &[usize]) -> f64 {
    if subset.is_empty() {
        return 1.0;
    }
    DMatrix::from_fn(subset.len(), subset.len(), |i, j| a[[subset[i], subset[j]]]).determinant()
}

/// Enumerates `P(Y = A) = det(L_A) / det(L + I)` for every `A`.
pub fn dpp_brute_probabilities(kernel: &KernelMatrix) -> Result<SubsetLaw> {
    let m = kernel.size();
    if m > MAX_ENUMERATION {
        return Err(Error::TooLarge(m));
    }
    let l = to_dmatrix(kernel.l.view());
    let shifted = &l + DMatrix::identity(m, m);
    let normalizer = shifted.clone().determinant();
    let probs: Vec<f64> = (0..(1usize << m))
        .map(|mask| {
            let subset: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
            principal_det(kernel.l.view(), &subset).max(0.0) / normalizer
        })
        .collect();
    let inv = shifted
        .try_inverse()
        .ok_or_else(|| Error::Contract("L + I is singular".into()))?;
    let b = l * inv;
    let marginal = Array2::from_shape_fn((m, m), |(i, j)| 0.5 * (b[(i, j)] + b[(j, i)]));
    Ok(SubsetLaw {
        size: m,
        probs,
        marginal,
        normalizer,
    })
}

/// Elementary symmetric polynomials `e_0..e_k` of `eigenvalues`.
pub fn elementary_symmetric(eigenvalues: &[f64], k: usize) -> Vec<f64> {
    let table = esp_table(eigenvalues, k);
    let m = eigenvalues.len();
    (0..=k).map(|j| table[[j, m]]).collect()
}

/// `table[[j, n]]` is `e_j` of the first `n` eigenvalues.
fn esp_table(eigenvalues: &[f64], k: usize) -> Array2<f64> {
    let m = eigenvalues.len();
    let mut e = Array2::<f64>::zeros((k + 1, m + 1));
    e.row_mut(0).fill(1.0);
    for j in 1..=k {
        for n in 1..=m {
            e[[j, n]] = e[[j, n - 1]] + eigenvalues[n - 1] * e[[j - 1, n - 1]];
        }
    }
    e
}

/// Reusable spectral sampler for one kernel.
#[derive(Debug, Clone)]
pub struct DppSampler {
    eigenvalues: Vec<f64>,
    eigenvectors: Array2<f64>,
    rank: usize,
}

impl DppSampler {
    pub fn new(kernel: &KernelMatrix) -> Self {
        let m = kernel.size();
        let eig = SymmetricEigen::new(to_dmatrix(kernel.l.view()));
        let raw: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let rank = raw.iter().filter(|&&x| x > RANK_TOL).count();
        let eigenvalues = raw.iter().map(|&x| x.max(0.0) + REGULARIZATION).collect();
        let eigenvectors = Array2::from_shape_fn((m, m), |(i, j)| eig.eigenvectors[(i, j)]);
        Self {
            eigenvalues,
            eigenvectors,
            rank,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn size(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Exact k-DPP draw of `m` distinct indices, sorted ascending.
    pub fn sample_k<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Vec<usize>> {
        if m > self.size() {
            return Err(Error::Contract(format!(
                "cannot draw {m} items from a pool of {}",
                self.size()
            )));
        }
        if m > self.rank {
            return Err(Error::RankDeficient {
                requested: m,
                rank: self.rank,
            });
        }
        if m == 0 {
            return Ok(Vec::new());
        }
        let table = esp_table(&self.eigenvalues, m);
        let mut chosen = Vec::with_capacity(m);
        let mut remaining = m;
        for n in (1..=self.size()).rev() {
            if remaining == 0 {
                break;
            }
            if n == remaining {
                chosen.extend((0..n).rev());
                break;
            }
            let accept = self.eigenvalues[n - 1] * table[[remaining - 1, n - 1]] / table[[remaining, n]];
            if rng.random::<f64>() < accept {
                chosen.push(n - 1);
                remaining -= 1;
            }
        }
        Ok(self.project(&chosen, rng))
    }

    /// Draw from the unconstrained L-ensemble (random size).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let chosen: Vec<usize> = (0..self.size())
            .filter(|&i| {
                let lam = self.eigenvalues[i];
                rng.random::<f64>() < lam / (lam + 1.0)
            })
            .collect();
        self.project(&chosen, rng)
    }

    /// Projection-DPP sampling from the span of the chosen eigenvectors.
    /// Keeps the projection kernel `K = V Vᵀ` and conditions it on each pick
    /// with a rank-one Schur update, so the next item is drawn with
    /// probability proportional to the remaining diagonal.
    fn project<R: Rng + ?Sized>(&self, chosen: &[usize], rng: &mut R) -> Vec<usize> {
        let m = self.size();
        let v = self.eigenvectors.select(Axis(1), chosen);
        let mut k = v.dot(&v.t());
        let mut out = Vec::with_capacity(chosen.len());
        for _ in 0..chosen.len() {
            let weights: Vec<f64> = (0..m)
                .map(|i| if out.contains(&i) { 0.0 } else { k[[i, i]].max(0.0) })
                .collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut item = weights.iter().rposition(|&w| w > 0.0).unwrap_or(m - 1);
            for (i, w) in weights.iter().enumerate() {
                if *w > 0.0 && u < *w {
                    item = i;
                    break;
                }
                u -= w;
            }
            out.push(item);

            let pivot = k[[item, item]];
            if pivot > 0.0 {
                let col = k.column(item).to_owned();
                for i in 0..m {
                    let f = col[i] / pivot;
                    if f != 0.0 {
                        k.row_mut(i).scaled_add(-f, &col);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Exact k-DPP sample of `m` pool indices (sorted).
pub fn sample_kdpp<R: Rng + ?Sized>(kernel: &KernelMatrix, m: usize, rng: &mut R) -> Result<Vec<usize>> {
    DppSampler::new(kernel).sample_k(m, rng)
}

/// Greedy MAP: repeatedly adds the item with the largest marginal gain in
/// `log det(L_A)`, using incremental Cholesky updates. Ties go to the lowest
/// index. Stops early (with a warning) when no remaining item has a positive
/// pivot.
pub fn greedy_map(kernel: &KernelMatrix, m: usize) -> Result<Vec<usize>> {
    let size = kernel.size();
    if m > size {
        return Err(Error::Contract(format!("cannot select {m} items from {size}")));
    }
    let l = &kernel.l;
    let mut gains: Vec<f64> = (0..size).map(|i| l[[i, i]]).collect();
    let mut factors: Vec<Vec<f64>> = vec![Vec::with_capacity(m); size];
    let mut selected = Vec::with_capacity(m);
    let mut taken = vec![false; size];
    while selected.len() < m {
        let mut best: Option<usize> = None;
        for i in (0..size).filter(|&i| !taken[i]) {
            if best.is_none_or(|b| gains[i] > gains[b]) {
                best = Some(i);
            }
        }
        let j = best.expect("m <= size");
        if gains[j] <= 1e-12 {
            log::warn!(
                "greedy MAP stopped at {} of {m} items: no positive pivot left",
                selected.len()
            );
            break;
        }
        selected.push(j);
        taken[j] = true;
        let pivot = gains[j].sqrt();
        let cj = factors[j].clone();
        for i in (0..size).filter(|&i| !taken[i]) {
            let dot: f64 = cj.iter().zip(&factors[i]).map(|(a, b)| a * b).sum();
            let e = (l[[j, i]] - dot) / pivot;
            factors[i].push(e);
            gains[i] -= e * e;
        }
    }
    Ok(selected)
}
