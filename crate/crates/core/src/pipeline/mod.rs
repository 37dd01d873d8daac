//! Training orchestration.
//!
//! Each epoch runs three barrier-separated phases:
//!
//! 1. refresh the embedding table (two dropout-free views per node);
//! 2. every `refresh_interval` epochs, rebuild each anchor's contrast plan
//!    (k-hop positives, mixup, filter heads, transfer, negative selection);
//! 3. minibatch updates, where the anchor's two views are recomputed in
//!    training mode and its negatives are read from the table as constants.
//!
//! All randomness comes from [`crate::rng::stream`] keyed by
//! `(seed, phase, epoch, node)`. Minibatch gradients are summed over fixed
//! chunks of anchors and the chunk sums are added in order, so results do
//! not depend on the number of worker threads.

pub mod config;
pub mod export;
pub mod probe;
pub mod report;

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::checkpoint::Checkpoint;
use crate::dpp::{build_kernel, greedy_map, Bandwidth, DppSampler};
use crate::encoder::{
    adam_step, encode, encoder_backward_into, xavier_init, AdamConfig, AdamState, EncoderDims, EncoderGrads,
    EncoderParams,
};
use crate::error::{Error, Result};
use crate::graph::{induced_subgraph, k_hop_neighbors, Graph, Splits};
use crate::objective::weighted_loss;
use crate::rng::{derive_seed, stream, Phase};
use crate::sampling::{
    add_mixup, filter_transfer, init_contrast_sets, make_views, random_walk, train_filter_heads, HeadConfig,
    PositiveSource, TransferRecord,
};

pub use config::{DppMode, Preset, StopOn, TrainConfig};
pub use export::{export_embeddings, pca_2d, pca_path, read_embeddings};
pub use probe::{linear_evaluate, validation_accuracy, ProbeConfig, ProbeRun, ProbeSummary};
pub use report::{EpochRecord, RebuildStats, RunReport};

/// Anchors per gradient chunk.
const CHUNK: usize = 8;

impl TrainConfig {
    pub fn probe(&self) -> ProbeConfig {
        ProbeConfig {
            steps: self.probe_steps,
            lr: self.probe_lr,
            l2: self.probe_l2,
        }
    }

    pub fn heads(&self) -> HeadConfig {
        HeadConfig {
            steps: self.head_steps,
            lr: self.head_lr,
            l2: self.head_l2,
        }
    }

    pub fn encoder_dims(&self, feature_dim: usize) -> EncoderDims {
        EncoderDims::new(feature_dim, self.hidden_dim, self.embed_dim)
    }
}

/// Readouts of both views for every node, taken without dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub hq: Array2<f64>,
    pub hk: Array2<f64>,
    pub epoch: usize,
}

pub fn refresh_embeddings(
    params: &EncoderParams,
    graph: &Graph,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<EmbeddingTable> {
    let rows = (0..graph.num_nodes())
        .into_par_iter()
        .map(|v| {
            let mut rng = stream(cfg.seed, Phase::Refresh, epoch as u64, v as u64);
            let (q, k) = make_views(graph, v, cfg.walk_steps, &mut rng)?;
            let hq = encode(params, &q, cfg.dropout, false, &mut rng)?.readout.h;
            let hk = encode(params, &k, cfg.dropout, false, &mut rng)?.readout.h;
            Ok((hq, hk))
        })
        .collect::<Result<Vec<_>>>()?;
    let d = params.dims().output;
    let mut hq = Array2::zeros((rows.len(), d));
    let mut hk = Array2::zeros((rows.len(), d));
    for (i, (q, k)) in rows.into_iter().enumerate() {
        hq.row_mut(i).assign(&q);
        hk.row_mut(i).assign(&k);
    }
    if hq.iter().chain(hk.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("embedding table at epoch {epoch}")));
    }
    Ok(EmbeddingTable { hq, hk, epoch })
}

/// Evaluation embeddings: the q-view readout averaged over `eval_walks`
/// walks from a stream that does not depend on the epoch. Row `i` belongs
/// to `nodes[i]`.
pub fn embed_nodes(params: &EncoderParams, graph: &Graph, cfg: &TrainConfig, nodes: &[usize]) -> Result<Array2<f64>> {
    let rows = nodes
        .par_iter()
        .map(|&v| {
            let mut rng = stream(cfg.seed, Phase::EvalWalk, 0, v as u64);
            let mut acc = Array1::<f64>::zeros(params.dims().output);
            for _ in 0..cfg.eval_walks {
                let walk = random_walk(graph, v, cfg.walk_steps, &mut rng);
                let view = induced_subgraph(graph, &walk, v)?;
                acc += &encode(params, &view, cfg.dropout, false, &mut rng)?.readout.h;
            }
            Ok(acc / cfg.eval_walks as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Array2::zeros((nodes.len(), params.dims().output));
    for (i, r) in rows.into_iter().enumerate() {
        out.row_mut(i).assign(&r);
    }
    Ok(out)
}

pub fn final_embeddings(params: &EncoderParams, graph: &Graph, cfg: &TrainConfig) -> Result<Array2<f64>> {
    let all: Vec<usize> = (0..graph.num_nodes()).collect();
    embed_nodes(params, graph, cfg, &all)
}

/// What one anchor trains against until the next rebuild.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorPlan {
    pub anchor: usize,
    /// Selected negatives, ascending.
    pub negatives: Vec<usize>,
    /// k-hop and transferred positives (node ids into the table).
    pub positive_nodes: Vec<usize>,
    pub mixup_points: Vec<Array1<f64>>,
    pub transfers: Vec<TransferRecord>,
    /// Numerical rank of the DPP kernel when it fell short of the request.
    pub rank_shortfall: Option<usize>,
}

fn uniform_subset<R: Rng + ?Sized>(items: &[usize], k: usize, rng: &mut R) -> Vec<usize> {
    if k >= items.len() {
        return items.to_vec();
    }
    let mut idx = rand::seq::index::sample(rng, items.len(), k).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i]).collect()
}

fn plan_anchor<R: Rng + ?Sized>(
    graph: &Graph,
    table: &EmbeddingTable,
    cfg: &TrainConfig,
    anchor: usize,
    rng: &mut R,
) -> Result<AnchorPlan> {
    let kview = table.hk.view();
    let khop = k_hop_neighbors(graph, anchor, cfg.khop);
    let mut sets = init_contrast_sets(anchor, graph.num_nodes(), &khop, kview);
    let count = cfg.mixup_count.unwrap_or(sets.positives.len());
    if count > 0 {
        add_mixup(&mut sets, count, cfg.mixup_beta, rng)?;
    }
    let mut transfers = Vec::new();
    if cfg.filter_on && !sets.negatives.is_empty() {
        let pool = uniform_subset(&sets.negatives, cfg.head_pool, rng);
        let negs: Vec<ArrayView1<'_, f64>> = pool.iter().map(|&j| kview.row(j)).collect();
        let heads = train_filter_heads(&sets.positive_embeddings(), &negs, &cfg.heads())?;
        let (filtered, records) = filter_transfer(&heads, sets, kview, cfg.alpha, &khop);
        sets = filtered;
        transfers = records;
    }

    let m = cfg.m_negatives.min(sets.negatives.len());
    let mut rank_shortfall = None;
    let negatives = match cfg.dpp_mode {
        DppMode::Off => uniform_subset(&sets.negatives, m, rng),
        mode => {
            let pool = uniform_subset(&sets.negatives, cfg.pool_size, rng);
            let m = m.min(pool.len());
            if m == pool.len() {
                pool
            } else {
                let kernel = build_kernel(kview.select(Axis(0), &pool).view(), pool.clone(), Bandwidth::Median)?;
                let picked = if mode == DppMode::Exact {
                    let sampler = DppSampler::new(&kernel);
                    if sampler.rank() < m {
                        rank_shortfall = Some(sampler.rank());
                    }
                    sampler.sample_k(m.min(sampler.rank()), rng)?
                } else {
                    greedy_map(&kernel, m)?
                };
                let mut ids: Vec<usize> = picked.into_iter().map(|i| pool[i]).collect();
                ids.sort_unstable();
                ids
            }
        }
    };

    let positive_nodes = sets
        .positives
        .iter()
        .filter(|p| p.source != PositiveSource::SelfView)
        .filter_map(|p| p.node)
        .collect();
    let mixup_points = sets
        .positives
        .iter()
        .filter(|p| p.source == PositiveSource::Mixup)
        .map(|p| p.embedding.clone())
        .collect();
    Ok(AnchorPlan {
        anchor,
        negatives,
        positive_nodes,
        mixup_points,
        transfers,
        rank_shortfall,
    })
}

/// Rebuilds contrast plans for `anchors` from the current table.
pub fn rebuild_contrast_sets(
    graph: &Graph,
    table: &EmbeddingTable,
    cfg: &TrainConfig,
    anchors: &[usize],
    epoch: usize,
) -> Result<(Vec<AnchorPlan>, RebuildStats)> {
    let plans = anchors
        .par_iter()
        .map(|&a| {
            let mut rng = stream(cfg.seed, Phase::Rebuild, epoch as u64, a as u64);
            plan_anchor(graph, table, cfg, a, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = graph.labels();
    let mut stats = RebuildStats {
        anchors: plans.len(),
        ..RebuildStats::default()
    };
    let mut negs = 0usize;
    for p in &plans {
        stats.transferred += p.transfers.len();
        stats.transferred_same_label += p.transfers.iter().filter(|t| labels[t.node] == labels[p.anchor]).count();
        stats.rank_shortfalls += usize::from(p.rank_shortfall.is_some());
        negs += p.negatives.len();
    }
    stats.mean_negatives = if plans.is_empty() { 0.0 } else { negs as f64 / plans.len() as f64 };
    if stats.rank_shortfalls > 0 {
        log::debug!(
            "epoch {epoch}: {} anchors had a DPP kernel rank below m",
            stats.rank_shortfalls
        );
    }
    Ok((plans, stats))
}

/// Where an anchor's negative embeddings are read from.
struct NegativeSource<'a> {
    table: ndarray::ArrayView2<'a, f64>,
    /// Row of node `j` in `table`; `None` means row `j`.
    slot: Option<&'a [usize]>,
}

impl NegativeSource<'_> {
    fn row_of(&self, j: usize) -> usize {
        self.slot.map_or(j, |s| s[j])
    }
}

/// Loss of one anchor; accumulates its parameter gradient into `grads` and,
/// when `neg_grads` is given, the gradient w.r.t. each negative row.
#[allow(clippy::too_many_arguments)]
fn anchor_step(
    params: &EncoderParams,
    graph: &Graph,
    table: &EmbeddingTable,
    negs_from: &NegativeSource<'_>,
    plan: &AnchorPlan,
    cfg: &TrainConfig,
    epoch: usize,
    grads: &mut EncoderGrads,
    mut neg_grads: Option<&mut Array2<f64>>,
) -> Result<f64> {
    let a = plan.anchor;
    let mut rng = stream(cfg.seed, Phase::Train, epoch as u64, a as u64);
    let (vq, vk) = make_views(graph, a, cfg.walk_steps, &mut rng)?;
    let cq = encode(params, &vq, cfg.dropout, true, &mut rng)?;
    let ck = encode(params, &vk, cfg.dropout, true, &mut rng)?;
    let rows: Vec<usize> = plan.negatives.iter().map(|&j| negs_from.row_of(j)).collect();
    let negs: Vec<ArrayView1<'_, f64>> = rows.iter().map(|&r| negs_from.table.row(r)).collect();
    let hq = cq.embedding().view();
    let terms = weighted_loss(hq, ck.embedding().view(), &negs, cfg.tau, cfg.tau_w, cfg.weights_on)?;
    let mut loss = terms.loss;
    let mut grad_q = terms.grad_hq;
    let mut push = |gn: &[Array1<f64>]| {
        if let Some(g) = neg_grads.as_deref_mut() {
            for (&r, d) in rows.iter().zip(gn) {
                let mut row = g.row_mut(r);
                row += d;
            }
        }
    };
    push(&terms.grad_negs);
    if cfg.positives_in_loss {
        let extra = plan
            .positive_nodes
            .iter()
            .map(|&j| table.hk.row(j))
            .chain(plan.mixup_points.iter().map(|p| p.view()));
        for p in extra {
            let t = weighted_loss(hq, p, &negs, cfg.tau, cfg.tau_w, cfg.weights_on)?;
            loss += t.loss;
            grad_q += &t.grad_hq;
            push(&t.grad_negs);
        }
    }
    encoder_backward_into(&cq, params, grad_q.view(), grads)?;
    encoder_backward_into(&ck, params, terms.grad_hk.view(), grads)?;
    Ok(loss)
}

fn param_norms(p: &EncoderParams) -> (f64, f64) {
    let n = |m: &Array2<f64>| m.iter().map(|v| v * v).sum::<f64>().sqrt();
    (n(&p.w1), n(&p.w2))
}

/// Epoch-by-epoch driver behind [`train`]. Exposed so callers can inspect
/// the table and plans between epochs.
pub struct Trainer<'g> {
    graph: &'g Graph,
    cfg: TrainConfig,
    batch_size: usize,
    params: EncoderParams,
    adam: AdamState,
    plans: Vec<AnchorPlan>,
    epoch: usize,
    history: Vec<EpochRecord>,
    best: Checkpoint,
    best_score: Option<f64>,
    best_val: Option<f64>,
    since_best: usize,
    stopped: bool,
    eval_nodes: Vec<usize>,
    eval_labels: Vec<usize>,
    eval_splits: Option<Splits>,
    started: Instant,
}

impl<'g> Trainer<'g> {
    pub fn new(graph: &'g Graph, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let n = graph.num_nodes();
        if n == 0 {
            return Err(Error::Contract("graph has no nodes".into()));
        }
        let splits = graph.splits();
        let has_val = !splits.train.is_empty() && !splits.val.is_empty();
        if cfg.stop_on == StopOn::ValAccuracy && !has_val {
            return Err(Error::Contract(
                "validation-based early stopping needs non-empty train and val splits".into(),
            ));
        }
        let batch_size = if cfg.batch_size > n {
            log::warn!("batch_size {} exceeds {n} nodes; using {n}", cfg.batch_size);
            n
        } else {
            cfg.batch_size
        };
        let dims = cfg.encoder_dims(graph.feature_dim());
        let params = xavier_init(dims, derive_seed(cfg.seed, Phase::Init, 0, 0))?;
        let adam = AdamState::new(
            dims,
            AdamConfig {
                lr: cfg.lr,
                ..AdamConfig::default()
            },
        );
        let best = Checkpoint {
            params: params.clone(),
            adam: adam.clone(),
            config_hash: cfg.hash(),
            epoch: 0,
        };
        let (eval_nodes, eval_labels, eval_splits) = if has_val {
            let nodes: Vec<usize> = splits.train.iter().chain(&splits.val).copied().collect();
            let labels = nodes.iter().map(|&v| graph.labels()[v]).collect();
            let nt = splits.train.len();
            let local = Splits {
                train: (0..nt).collect(),
                val: (nt..nodes.len()).collect(),
                test: Vec::new(),
            };
            (nodes, labels, Some(local))
        } else {
            (Vec::new(), Vec::new(), None)
        };
        Ok(Self {
            graph,
            cfg,
            batch_size,
            params,
            adam,
            plans: Vec::new(),
            epoch: 0,
            history: Vec::new(),
            best,
            best_score: None,
            best_val: None,
            since_best: 0,
            stopped: false,
            eval_nodes,
            eval_labels,
            eval_splits,
            started: Instant::now(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn params(&self) -> &EncoderParams {
        &self.params
    }

    pub fn plans(&self) -> &[AnchorPlan] {
        &self.plans
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    pub fn best(&self) -> &Checkpoint {
        &self.best
    }

    fn batch_step(&self, table: &EmbeddingTable, batch: &[usize], epoch: usize) -> Result<(f64, EncoderGrads)> {
        let dims = self.params.dims();
        let n = self.graph.num_nodes();
        let tag = |a: usize| {
            move |e: Error| match e {
                Error::NonFinite(msg) => Error::NonFinite(format!("epoch {epoch} anchor {a}: {msg}")),
                other => other,
            }
        };

        // With negative gradients on, every negative used in the batch is
        // re-encoded (same walk as its table row, current parameters).
        let live = if self.cfg.negative_gradients {
            let mut slot = vec![usize::MAX; n];
            let mut uniq = Vec::new();
            for &a in batch {
                for &j in &self.plans[a].negatives {
                    if slot[j] == usize::MAX {
                        slot[j] = 0;
                        uniq.push(j);
                    }
                }
            }
            uniq.sort_unstable();
            for (s, &j) in uniq.iter().enumerate() {
                slot[j] = s;
            }
            let caches = uniq
                .par_iter()
                .map(|&j| {
                    let mut rng = stream(self.cfg.seed, Phase::Refresh, epoch as u64, j as u64);
                    let (_, k) = make_views(self.graph, j, self.cfg.walk_steps, &mut rng)?;
                    encode(&self.params, &k, self.cfg.dropout, false, &mut rng)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut emb = Array2::zeros((uniq.len(), dims.output));
            for (s, c) in caches.iter().enumerate() {
                emb.row_mut(s).assign(c.embedding());
            }
            Some((slot, caches, emb))
        } else {
            None
        };
        let source = match &live {
            Some((slot, _, emb)) => NegativeSource {
                table: emb.view(),
                slot: Some(slot),
            },
            None => NegativeSource {
                table: table.hk.view(),
                slot: None,
            },
        };

        let partials = batch
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut grads = EncoderGrads::zeros(dims);
                let mut neg_grads = live.as_ref().map(|(_, _, emb)| Array2::<f64>::zeros(emb.dim()));
                let mut loss = 0.0;
                for &a in chunk {
                    loss += anchor_step(
                        &self.params,
                        self.graph,
                        table,
                        &source,
                        &self.plans[a],
                        &self.cfg,
                        epoch,
                        &mut grads,
                        neg_grads.as_mut(),
                    )
                    .map_err(tag(a))?;
                }
                Ok((loss, grads, neg_grads))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut grads = EncoderGrads::zeros(dims);
        let mut loss = 0.0;
        let mut neg_total: Option<Array2<f64>> = None;
        for (l, g, ng) in partials {
            loss += l;
            grads.add_assign(&g);
            if let Some(ng) = ng {
                match neg_total.as_mut() {
                    Some(t) => *t += &ng,
                    None => neg_total = Some(ng),
                }
            }
        }
        if let (Some((_, caches, _)), Some(ng)) = (&live, &neg_total) {
            let slots: Vec<usize> = (0..caches.len()).collect();
            let parts = slots
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut g = EncoderGrads::zeros(dims);
                    for &s in chunk {
                        encoder_backward_into(&caches[s], &self.params, ng.row(s), &mut g)?;
                    }
                    Ok(g)
                })
                .collect::<Result<Vec<_>>>()?;
            for g in &parts {
                grads.add_assign(g);
            }
        }
        grads.scale(1.0 / batch.len() as f64);
        Ok((loss, grads))
    }

    fn diagnostics(&self, epoch: usize, batch: usize, loss: f64) -> Error {
        let (n1, n2) = param_norms(&self.params);
        let msg = format!(
            "loss {loss} at epoch {epoch} batch {batch}; |W1|={n1:.6e} |W2|={n2:.6e} adam_t={} config={}",
            self.adam.t,
            self.cfg.hash()
        );
        log::error!("{msg}");
        Error::NonFinite(msg)
    }

    /// Runs one epoch and applies the early-stopping rule.
    pub fn run_epoch(&mut self) -> Result<&EpochRecord> {
        let e = self.epoch + 1;
        let n = self.graph.num_nodes();
        let table = refresh_embeddings(&self.params, self.graph, &self.cfg, e)?;
        let mut rebuild = None;
        if (e - 1) % self.cfg.refresh_interval == 0 || self.plans.is_empty() {
            let anchors: Vec<usize> = (0..n).collect();
            let (plans, stats) = rebuild_contrast_sets(self.graph, &table, &self.cfg, &anchors, e)?;
            self.plans = plans;
            rebuild = Some(stats);
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream(self.cfg.seed, Phase::Shuffle, e as u64, 0));
        let mut total = 0.0;
        for (b, batch) in order.chunks(self.batch_size).enumerate() {
            let (loss, grads) = match self.batch_step(&table, batch, e) {
                Ok(r) => r,
                Err(Error::NonFinite(msg)) => {
                    log::error!("{msg}");
                    return Err(self.diagnostics(e, b, f64::NAN));
                }
                Err(other) => return Err(other),
            };
            if !loss.is_finite() || !grads.is_finite() {
                return Err(self.diagnostics(e, b, loss));
            }
            total += loss;
            adam_step(&mut self.params, &grads, &mut self.adam)?;
        }
        let mean_loss = total / n as f64;

        let mut val_acc = None;
        if e % self.cfg.eval_interval == 0 {
            if let Some(splits) = &self.eval_splits {
                let emb = embed_nodes(&self.params, self.graph, &self.cfg, &self.eval_nodes)?;
                val_acc = Some(validation_accuracy(
                    emb.view(),
                    &self.eval_labels,
                    splits,
                    self.graph.num_classes(),
                    self.cfg.seed,
                    &self.cfg.probe(),
                )?);
            }
            let score = match self.cfg.stop_on {
                StopOn::ValAccuracy => val_acc,
                StopOn::Loss => Some(-mean_loss),
            };
            if let Some(score) = score {
                if self.best_score.is_none_or(|b| score > b) {
                    self.best_score = Some(score);
                    self.best_val = val_acc;
                    self.since_best = 0;
                    self.best = Checkpoint {
                        params: self.params.clone(),
                        adam: self.adam.clone(),
                        config_hash: self.cfg.hash(),
                        epoch: e as u64,
                    };
                } else {
                    self.since_best += 1;
                    if self.since_best >= self.cfg.patience {
                        log::info!("early stop at epoch {e}; best epoch {}", self.best.epoch);
                        self.stopped = true;
                    }
                }
            }
        }
        log::info!(
            "epoch {e} loss {mean_loss:.6} val {}",
            val_acc.map_or("-".into(), |v| format!("{v:.4}"))
        );
        self.epoch = e;
        self.history.push(EpochRecord {
            epoch: e,
            loss: mean_loss,
            val_acc,
            rebuild,
        });
        Ok(self.history.last().expect("just pushed"))
    }

    /// Probes the best checkpoint on the test split and assembles the report.
    pub fn finish(self) -> Result<(Checkpoint, RunReport)> {
        let splits = self.graph.splits();
        let probe = if splits.train.is_empty() || splits.val.is_empty() || splits.test.is_empty() {
            None
        } else {
            let emb = final_embeddings(&self.best.params, self.graph, &self.cfg)?;
            Some(linear_evaluate(
                emb.view(),
                self.graph.labels(),
                splits,
                self.cfg.probe_runs,
                self.cfg.seed,
                &self.cfg.probe(),
            )?)
        };
        let report = RunReport {
            config_hash: self.cfg.hash(),
            best_epoch: self.best.epoch as usize,
            best_val: self.best_val,
            stopped_early: self.stopped,
            probe,
            epochs: self.history,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
        };
        Ok((self.best, report))
    }
}

/// Full training run: epochs until the budget or early stopping, then a
/// test-split probe of the best checkpoint.
pub fn train(graph: &Graph, cfg: &TrainConfig) -> Result<(Checkpoint, RunReport)> {
    let mut trainer = Trainer::new(graph, cfg.clone())?;
    while trainer.epoch() < cfg.epochs && !trainer.is_stopped() {
        trainer.run_epoch()?;
    }
    trainer.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, SbmParams};

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            hidden_dim: 8,
            embed_dim: 8,
            m_negatives: 6,
            pool_size: 12,
            head_pool: 16,
            head_steps: 10,
            batch_size: 16,
            probe_runs: 2,
            probe_steps: 50,
            eval_walks: 2,
            walk_steps: 6,
            ..TrainConfig::desk()
        }
    }

    fn small_sbm(seed: u64) -> Graph {
        generate_sbm(
            &SbmParams {
                block_sizes: vec![15, 15],
                p_in: 0.3,
                p_out: 0.02,
                feature_dim: 6,
                feature_separation: 3.0,
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn single_isolated_node_table_rows_match() {
        let g = Graph::new(1, vec![], Array2::from_elem((1, 3), 0.5), vec![0], Splits::default()).unwrap();
        let cfg = tiny_cfg();
        let params = xavier_init(cfg.encoder_dims(3), 1).unwrap();
        let t = refresh_embeddings(&params, &g, &cfg, 1).unwrap();
        assert_eq!(t.hq, t.hk);
        assert!(t.hq.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn table_is_deterministic() {
        let g = small_sbm(1);
        let cfg = tiny_cfg();
        let params = xavier_init(cfg.encoder_dims(6), 2).unwrap();
        let a = refresh_embeddings(&params, &g, &cfg, 3).unwrap();
        let b = refresh_embeddings(&params, &g, &cfg, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.hk.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let g = small_sbm(2);
        let cfg = TrainConfig {
            epochs: 0,
            ..tiny_cfg()
        };
        let (ck, report) = train(&g, &cfg).unwrap();
        let init = xavier_init(cfg.encoder_dims(6), derive_seed(cfg.seed, Phase::Init, 0, 0)).unwrap();
        assert_eq!(ck.params, init);
        assert_eq!(ck.epoch, 0);
        assert!(report.epochs.is_empty());
    }

    #[test]
    fn ablation_without_components() {
        let g = small_sbm(3);
        let cfg = tiny_cfg().with_preset(Preset::WithoutAll);
        let params = xavier_init(cfg.encoder_dims(6), 3).unwrap();
        let table = refresh_embeddings(&params, &g, &cfg, 1).unwrap();
        let anchors: Vec<usize> = (0..g.num_nodes()).collect();
        let (plans, stats) = rebuild_contrast_sets(&g, &table, &cfg, &anchors, 1).unwrap();
        assert_eq!(stats.transferred, 0);
        for p in &plans {
            let khop = k_hop_neighbors(&g, p.anchor, cfg.khop);
            let complement = g.num_nodes() - khop.len();
            assert_eq!(p.negatives.len(), cfg.m_negatives.min(complement));
            assert!(p.negatives.iter().all(|j| khop.binary_search(j).is_err()));
        }
    }

    #[test]
    fn full_pipeline_plans_are_consistent() {
        let g = small_sbm(4);
        let cfg = tiny_cfg();
        let params = xavier_init(cfg.encoder_dims(6), 4).unwrap();
        let table = refresh_embeddings(&params, &g, &cfg, 1).unwrap();
        let anchors: Vec<usize> = (0..g.num_nodes()).collect();
        let (plans, _) = rebuild_contrast_sets(&g, &table, &cfg, &anchors, 1).unwrap();
        for p in &plans {
            assert!(!p.negatives.contains(&p.anchor));
            assert!(p.negatives.windows(2).all(|w| w[0] < w[1]));
            assert!(p.negatives.iter().all(|j| !p.positive_nodes.contains(j)));
            assert!(p.negatives.len() <= cfg.m_negatives);
        }
    }

    #[test]
    fn training_is_reproducible() {
        let g = small_sbm(5);
        let cfg = TrainConfig {
            epochs: 3,
            ..tiny_cfg()
        };
        let (a, ra) = train(&g, &cfg).unwrap();
        let (b, rb) = train(&g, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.metrics_tsv(), rb.metrics_tsv());
        assert_eq!(ra.epochs.len(), 3);
        let p = ra.probe.unwrap();
        assert!((0.0..=1.0).contains(&p.mean));
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let g = small_sbm(6);
        let cfg = TrainConfig {
            epochs: 2,
            ..tiny_cfg()
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| train(&g, &cfg).unwrap())
        };
        assert_eq!(run(1).0, run(3).0);
    }

    #[test]
    fn positives_in_loss_runs() {
        let g = small_sbm(7);
        let cfg = TrainConfig {
            epochs: 1,
            positives_in_loss: true,
            ..tiny_cfg()
        };
        let (_, r) = train(&g, &cfg).unwrap();
        assert!(r.epochs[0].loss.is_finite());
    }

    #[test]
    fn early_stopping_keeps_best() {
        let g = small_sbm(8);
        let cfg = TrainConfig {
            epochs: 30,
            patience: 2,
            ..tiny_cfg()
        };
        let (ck, r) = train(&g, &cfg).unwrap();
        let best = r
            .epochs
            .iter()
            .filter_map(|e| e.val_acc)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.best_val, Some(best));
        assert_eq!(ck.epoch as usize, r.best_epoch);
        if r.stopped_early {
            assert!(r.epochs.len() < 30);
        }
    }

    #[test]
    fn missing_val_split_is_rejected() {
        let g = small_sbm(9).with_splits(Splits::default()).unwrap();
        assert!(Trainer::new(&g, tiny_cfg()).is_err());
        let cfg = TrainConfig {
            stop_on: StopOn::Loss,
            epochs: 1,
            ..tiny_cfg()
        };
        let (_, r) = train(&g, &cfg).unwrap();
        assert!(r.probe.is_none());
    }
}
