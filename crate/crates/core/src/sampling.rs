//! Random-walk views, per-anchor contrast sets, embedding-space mixup and the
//! soft-margin class-collision filter.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::graph::{induced_subgraph, Graph, SubgraphView};

/// Uniform-neighbor walk of `steps` transitions from `v`. Returns the visited
/// vertices in first-visit order (so `v` comes first). A walk at a degree-0
/// node stays put.
pub fn random_walk<R: Rng + ?Sized>(graph: &Graph, v: usize, steps: usize, rng: &mut R) -> Vec<usize> {
    let mut visited = vec![v];
    let mut current = v;
    for _ in 0..steps {
        let nbrs = graph.neighbors(current);
        if nbrs.is_empty() {
            continue;
        }
        current = nbrs[rng.random_range(0..nbrs.len())];
        if !visited.contains(&current) {
            visited.push(current);
        }
    }
    visited
}

/// Two independent walks from `v`, each turned into an induced subgraph
/// anchored at `v`.
pub fn make_views<R: Rng + ?Sized>(
    graph: &Graph,
    v: usize,
    steps: usize,
    rng: &mut R,
) -> Result<(SubgraphView, SubgraphView)> {
    if v >= graph.num_nodes() {
        return Err(Error::Range {
            what: "anchor",
            value: v,
            limit: graph.num_nodes(),
        });
    }
    let q = induced_subgraph(graph, &random_walk(graph, v, steps, rng), v)?;
    let k = induced_subgraph(graph, &random_walk(graph, v, steps, rng), v)?;
    Ok((q, k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PositiveSource {
    SelfView,
    KHop,
    Mixup,
    Transferred,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Positive {
    pub embedding: Array1<f64>,
    pub source: PositiveSource,
    /// Graph node the embedding belongs to (`None` for mixup points).
    pub node: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastSets {
    pub anchor: usize,
    pub positives: Vec<Positive>,
    /// Node ids into the k-view embedding table, ascending.
    pub negatives: Vec<usize>,
}

impl ContrastSets {
    pub fn positive_embeddings(&self) -> Vec<ArrayView1<'_, f64>> {
        self.positives.iter().map(|p| p.embedding.view()).collect()
    }

    pub fn count(&self, source: PositiveSource) -> usize {
        self.positives.iter().filter(|p| p.source == source).count()
    }
}

/// Positives are the k-view embeddings of `khop` (anchor first); every other
/// node is a negative.
pub fn init_contrast_sets(anchor: usize, num_nodes: usize, khop: &[usize], kview: ArrayView2<'_, f64>) -> ContrastSets {
    let mut in_khop = vec![false; num_nodes];
    for &v in khop {
        in_khop[v] = true;
    }
    let mut positives = vec![Positive {
        embedding: kview.row(anchor).to_owned(),
        source: PositiveSource::SelfView,
        node: Some(anchor),
    }];
    positives.extend(khop.iter().filter(|&&v| v != anchor).map(|&v| Positive {
        embedding: kview.row(v).to_owned(),
        source: PositiveSource::KHop,
        node: Some(v),
    }));
    let negatives = (0..num_nodes).filter(|&v| !in_khop[v] && v != anchor).collect();
    ContrastSets {
        anchor,
        positives,
        negatives,
    }
}

/// `λ a + (1 - λ) b`.
pub fn mix_pair(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>, lambda: f64) -> Array1<f64> {
    &a * lambda + &b * (1.0 - lambda)
}

/// Appends `count` mixup points to `positives`, each a convex combination of
/// two uniformly chosen existing positives with `λ ~ Beta(beta, beta)`.
pub fn mixup_augment<R: Rng + ?Sized>(
    positives: &[Array1<f64>],
    count: usize,
    beta: f64,
    rng: &mut R,
) -> Result<Vec<Array1<f64>>> {
    if positives.is_empty() {
        return Err(Error::Contract("mixup needs at least one positive".into()));
    }
    let dist = Beta::new(beta, beta).map_err(|e| Error::Param(format!("mixup beta {beta}: {e}")))?;
    let mut out = positives.to_vec();
    for _ in 0..count {
        let a = rng.random_range(0..positives.len());
        let b = rng.random_range(0..positives.len());
        let lambda = dist.sample(rng);
        out.push(mix_pair(positives[a].view(), positives[b].view(), lambda));
    }
    Ok(out)
}

/// Adds mixup points to `sets` in place (tagged [`PositiveSource::Mixup`]).
pub fn add_mixup<R: Rng + ?Sized>(sets: &mut ContrastSets, count: usize, beta: f64, rng: &mut R) -> Result<()> {
    let base: Vec<Array1<f64>> = sets.positives.iter().map(|p| p.embedding.clone()).collect();
    let mixed = mixup_augment(&base, count, beta, rng)?;
    sets.positives.extend(mixed.into_iter().skip(base.len()).map(|embedding| Positive {
        embedding,
        source: PositiveSource::Mixup,
        node: None,
    }));
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticHead {
    pub weights: Array1<f64>,
    pub bias: f64,
}

impl LogisticHead {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: Array1::zeros(dim),
            bias: 0.0,
        }
    }

    pub fn logit(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.weights.dot(&x) + self.bias
    }

    pub fn prob(&self, x: ArrayView1<'_, f64>) -> f64 {
        let z = self.logit(x);
        if z >= 0.0 {
            1.0 / (1.0 + (-z).exp())
        } else {
            let e = z.exp();
            e / (1.0 + e)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadConfig {
    pub steps: usize,
    pub lr: f64,
    pub l2: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            lr: 1.0,
            l2: 1e-3,
        }
    }
}

/// The pair of per-anchor discriminators: `plus` scores "looks like a
/// positive", `minus` scores "looks like a negative".
#[derive(Debug, Clone, PartialEq)]
pub struct FilterHeads {
    pub plus: LogisticHead,
    pub minus: LogisticHead,
    pub trained_steps: usize,
}

fn stack(rows: &[ArrayView1<'_, f64>], dim: usize) -> Array2<f64> {
    let mut m = Array2::zeros((rows.len(), dim));
    for (i, r) in rows.iter().enumerate() {
        m.row_mut(i).assign(r);
    }
    m
}

/// Full-batch gradient descent on class-balanced logistic loss (each class
/// contributes half) plus `l2/2 ‖w‖²`, from zero weights.
fn train_logistic(class1: &Array2<f64>, class0: &Array2<f64>, cfg: &HeadConfig) -> LogisticHead {
    let dim = class1.ncols();
    let mut head = LogisticHead::zeros(dim);
    for _ in 0..cfg.steps {
        let mut gw = &head.weights * cfg.l2;
        let mut gb = 0.0;
        for (x, target) in [(class1, 1.0), (class0, 0.0)] {
            let n = x.nrows() as f64;
            let logits = x.dot(&head.weights) + head.bias;
            let resid = logits.mapv(|z| {
                let p = if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    z.exp() / (1.0 + z.exp())
                };
                (p - target) * 0.5 / n
            });
            gw += &x.t().dot(&resid);
            gb += resid.sum();
        }
        head.weights.scaled_add(-cfg.lr, &gw);
        head.bias -= cfg.lr * gb;
    }
    head
}

/// Trains `plus` with positives as class 1 and `minus` with negatives as
/// class 1.
pub fn train_filter_heads(
    positives: &[ArrayView1<'_, f64>],
    negatives: &[ArrayView1<'_, f64>],
    cfg: &HeadConfig,
) -> Result<FilterHeads> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Contract("filter heads need positives and negatives".into()));
    }
    let dim = positives[0].len();
    if positives.iter().chain(negatives).any(|x| x.len() != dim) {
        return Err(Error::Contract("embedding dimensions differ".into()));
    }
    let mut pos = stack(positives, dim);
    let mut neg = stack(negatives, dim);

    // Train on centered inputs scaled to unit mean squared norm, then fold
    // the map back into the weights so heads apply to raw embeddings.
    let total = (pos.nrows() + neg.nrows()) as f64;
    let mean = (pos.sum_axis(Axis(0)) + neg.sum_axis(Axis(0))) / total;
    pos -= &mean;
    neg -= &mean;
    let spread = ((pos.iter().chain(neg.iter()).map(|v| v * v).sum::<f64>()) / total).sqrt();
    let scale = if spread > 1e-12 { spread } else { 1.0 };
    pos /= scale;
    neg /= scale;
    let unfold = |mut head: LogisticHead| {
        head.weights /= scale;
        head.bias -= head.weights.dot(&mean);
        head
    };
    Ok(FilterHeads {
        plus: unfold(train_logistic(&pos, &neg, cfg)),
        minus: unfold(train_logistic(&neg, &pos, cfg)),
        trained_steps: cfg.steps,
    })
}

/// `p⁺ / p⁻` with `p⁻` floored at 1e-12; exactly zero `p⁻` gives `+∞`.
pub fn density_ratio(p_plus: f64, p_minus: f64) -> f64 {
    if p_minus == 0.0 {
        f64::INFINITY
    } else {
        p_plus / p_minus.max(1e-12)
    }
}

/// One negative moved into the positive set.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferRecord {
    pub anchor: usize,
    pub node: usize,
    pub p_plus: f64,
    pub p_minus: f64,
    pub ratio: f64,
}

/// Moves every negative `j ∉ khop` with `p⁺(h_j)/p⁻(h_j) > alpha` into the
/// positives (tagged [`PositiveSource::Transferred`]).
pub fn filter_transfer(
    heads: &FilterHeads,
    mut sets: ContrastSets,
    kview: ArrayView2<'_, f64>,
    alpha: f64,
    khop: &[usize],
) -> (ContrastSets, Vec<TransferRecord>) {
    let mut kept = Vec::with_capacity(sets.negatives.len());
    let mut records = Vec::new();
    for &j in &sets.negatives {
        if j == sets.anchor || khop.binary_search(&j).is_ok() {
            kept.push(j);
            continue;
        }
        let h = kview.row(j);
        let p_plus = heads.plus.prob(h);
        let p_minus = heads.minus.prob(h);
        if p_minus == 0.0 {
            log::debug!("anchor {}: p- is zero for node {j}", sets.anchor);
        }
        let ratio = density_ratio(p_plus, p_minus);
        if ratio > alpha {
            sets.positives.push(Positive {
                embedding: h.to_owned(),
                source: PositiveSource::Transferred,
                node: Some(j),
            });
            records.push(TransferRecord {
                anchor: sets.anchor,
                node: j,
                p_plus,
                p_minus,
                ratio,
            });
        } else {
            kept.push(j);
        }
    }
    sets.negatives = kept;
    (sets, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, k_hop_neighbors, SbmParams, Splits};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::new(n, edges.iter().copied(), Array2::zeros((n, 1)), vec![0; n], Splits::default()).unwrap()
    }

    #[test]
    fn walk_on_isolated_node() {
        let g = graph(3, &[(1, 2)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(random_walk(&g, 0, 25, &mut rng), vec![0]);
        let (q, k) = make_views(&g, 0, 25, &mut rng).unwrap();
        assert_eq!(q.local_to_global, vec![0]);
        assert_eq!(k.local_to_global, vec![0]);
    }

    #[test]
    fn one_step_walk() {
        let g = graph(4, &[(0, 1), (0, 2), (0, 3)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let w = random_walk(&g, 0, 1, &mut rng);
            assert_eq!(w.len(), 2);
            assert_eq!(w[0], 0);
        }
    }

    #[test]
    fn walk_stays_in_component() {
        let p = SbmParams {
            block_sizes: vec![5, 5],
            p_in: 1.0,
            p_out: 0.0,
            feature_dim: 2,
            feature_separation: 1.0,
        };
        let g = generate_sbm(&p, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for v in 0..10 {
            for &u in &random_walk(&g, v, 25, &mut rng) {
                assert_eq!(g.labels()[u], g.labels()[v]);
            }
        }
    }

    #[test]
    fn views_are_deterministic_per_seed() {
        let g = graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        let a = make_views(&g, 2, 10, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = make_views(&g, 2, 10, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a.0.local_to_global, b.0.local_to_global);
        assert_eq!(a.1.local_to_global, b.1.local_to_global);
    }

    #[test]
    fn contrast_set_init() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let table = Array2::from_shape_fn((4, 2), |(i, j)| (i * 2 + j) as f64);
        let s = init_contrast_sets(0, 4, &k_hop_neighbors(&g, 0, 0), table.view());
        assert_eq!(s.positives.len(), 1);
        assert_eq!(s.negatives, vec![1, 2, 3]);

        let s = init_contrast_sets(0, 4, &k_hop_neighbors(&g, 0, 1), table.view());
        assert_eq!(s.positives.len(), 2);
        assert_eq!(s.positives[0].source, PositiveSource::SelfView);
        assert_eq!(s.positives[1].node, Some(1));
        assert_eq!(s.positives[1].embedding, array![2.0, 3.0]);
        assert_eq!(s.negatives, vec![2, 3]);

        let complete = graph(3, &[(0, 1), (0, 2), (1, 2)]);
        let s = init_contrast_sets(1, 3, &k_hop_neighbors(&complete, 1, 1), table.view());
        assert!(s.negatives.is_empty());
    }

    #[test]
    fn mixup_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pos = vec![array![0.0, 2.0], array![2.0, 0.0]];
        assert_eq!(mixup_augment(&pos, 0, 1.0, &mut rng).unwrap(), pos);
        assert_eq!(mix_pair(pos[0].view(), pos[1].view(), 0.5), array![1.0, 1.0]);
        let out = mixup_augment(&pos, 5, 1.0, &mut rng).unwrap();
        assert_eq!(out.len(), 7);
        assert!(mixup_augment(&[], 1, 1.0, &mut rng).is_err());
        assert!(mixup_augment(&pos, 1, 0.0, &mut rng).is_err());
    }

    #[test]
    fn separable_heads() {
        let pos: Vec<Array1<f64>> = (0..10).map(|i| Array1::from_elem(3, 1.0 + 0.01 * i as f64)).collect();
        let neg: Vec<Array1<f64>> = (0..10).map(|i| Array1::from_elem(3, -1.0 - 0.01 * i as f64)).collect();
        let pv: Vec<_> = pos.iter().map(|x| x.view()).collect();
        let nv: Vec<_> = neg.iter().map(|x| x.view()).collect();
        let cfg = HeadConfig {
            steps: 200,
            ..HeadConfig::default()
        };
        let heads = train_filter_heads(&pv, &nv, &cfg).unwrap();
        assert!(pv.iter().all(|x| heads.plus.prob(*x) > 0.5));
        assert!(nv.iter().all(|x| heads.plus.prob(*x) < 0.5));
        assert!(nv.iter().all(|x| heads.minus.prob(*x) > 0.5));

        let swapped = train_filter_heads(&nv, &pv, &cfg).unwrap();
        assert_eq!(swapped.plus, heads.minus);
        assert_eq!(swapped.minus, heads.plus);

        let idle = train_filter_heads(&pv, &nv, &HeadConfig { steps: 0, ..cfg }).unwrap();
        assert!(pv.iter().chain(&nv).all(|x| idle.plus.prob(*x) == 0.5));
    }

    #[test]
    fn ratio_rule() {
        assert!(density_ratio(0.9, 0.5) > 0.9);
        assert_eq!(density_ratio(0.3, 0.0), f64::INFINITY);
        assert!(density_ratio(0.3, 1e-20) > 1e10);
    }

    #[test]
    fn infinite_alpha_transfers_nothing() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let table = Array2::from_shape_fn((4, 2), |(i, j)| (i + j) as f64 * 0.1);
        let khop = k_hop_neighbors(&g, 0, 1);
        let sets = init_contrast_sets(0, 4, &khop, table.view());
        let heads = FilterHeads {
            plus: LogisticHead {
                weights: array![5.0, 5.0],
                bias: 3.0,
            },
            minus: LogisticHead::zeros(2),
            trained_steps: 0,
        };
        let (out, rec) = filter_transfer(&heads, sets.clone(), table.view(), f64::INFINITY, &khop);
        assert_eq!(out, sets);
        assert!(rec.is_empty());

        let (out, rec) = filter_transfer(&heads, sets, table.view(), 0.9, &khop);
        assert!(out.negatives.is_empty());
        assert_eq!(rec.len(), 2);
        assert_eq!(out.count(PositiveSource::Transferred), 2);
    }
}
