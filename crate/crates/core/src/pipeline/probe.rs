//! Linear probe: multinomial logistic regression on frozen embeddings.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Splits;
use crate::rng::{stream, Phase};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub steps: usize,
    pub lr: f64,
    pub l2: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            lr: 0.01,
            l2: 1e-4,
        }
    }
}

/// Outcome of one probe run: accuracies at the step with the best
/// validation accuracy (earliest such step).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRun {
    pub val_acc: f64,
    pub test_acc: f64,
    pub best_step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSummary {
    pub runs: Vec<ProbeRun>,
    pub mean: f64,
    /// Population standard deviation over runs.
    pub std: f64,
}

fn gather(x: ArrayView2<'_, f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

fn logits(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    x.dot(w) + b
}

fn accuracy(x: &Array2<f64>, y: &[usize], w: &Array2<f64>, b: &Array1<f64>) -> f64 {
    let z = logits(x, w, b);
    let hits = z
        .outer_iter()
        .zip(y)
        .filter(|(row, &label)| argmax(row.as_slice().unwrap()) == label)
        .count();
    hits as f64 / y.len() as f64
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// One probe run from a seeded small random init, full-batch Adam.
pub fn probe_run<R: Rng + ?Sized>(
    embeddings: ArrayView2<'_, f64>,
    labels: &[usize],
    splits: &Splits,
    num_classes: usize,
    cfg: &ProbeConfig,
    rng: &mut R,
) -> Result<ProbeRun> {
    for (name, idx) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        if idx.is_empty() {
            return Err(Error::Contract(format!("{name} split is empty")));
        }
    }
    if labels.len() != embeddings.nrows() {
        return Err(Error::Contract(format!(
            "{} labels for {} embeddings",
            labels.len(),
            embeddings.nrows()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::Range {
            what: "label",
            value: bad,
            limit: num_classes,
        });
    }
    let d = embeddings.ncols();
    let xs = [&splits.train, &splits.val, &splits.test].map(|idx| gather(embeddings, idx));
    let ys = [&splits.train, &splits.val, &splits.test].map(|idx| idx.iter().map(|&i| labels[i]).collect::<Vec<_>>());
    let (xt, yt) = (&xs[0], &ys[0]);
    let n = xt.nrows() as f64;

    let mut w = Array2::from_shape_fn((d, num_classes), |_| rng.random_range(-0.01..0.01));
    let mut b = Array1::<f64>::zeros(num_classes);
    let (mut mw, mut vw) = (Array2::<f64>::zeros(w.dim()), Array2::<f64>::zeros(w.dim()));
    let (mut mb, mut vb) = (Array1::<f64>::zeros(num_classes), Array1::<f64>::zeros(num_classes));
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);

    let mut best = ProbeRun {
        val_acc: accuracy(&xs[1], &ys[1], &w, &b),
        test_acc: accuracy(&xs[2], &ys[2], &w, &b),
        best_step: 0,
    };
    for step in 1..=cfg.steps {
        let mut z = logits(xt, &w, &b);
        for (mut row, &y) in z.outer_iter_mut().zip(yt) {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row /= sum;
            row[y] -= 1.0;
        }
        z /= n;
        let gw = xt.t().dot(&z) + &w * cfg.l2;
        let gb = z.sum_axis(Axis(0));
        let t = step as i32;
        let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
        for (p, g, m, v) in [
            (w.as_slice_mut().unwrap(), gw.as_slice().unwrap(), mw.as_slice_mut().unwrap(), vw.as_slice_mut().unwrap()),
            (b.as_slice_mut().unwrap(), gb.as_slice().unwrap(), mb.as_slice_mut().unwrap(), vb.as_slice_mut().unwrap()),
        ] {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= cfg.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
        let val_acc = accuracy(&xs[1], &ys[1], &w, &b);
        if val_acc > best.val_acc {
            best = ProbeRun {
                val_acc,
                test_acc: accuracy(&xs[2], &ys[2], &w, &b),
                best_step: step,
            };
        }
    }
    Ok(best)
}

/// Test accuracy mean and population std over `runs` seeded probe runs.
pub fn linear_evaluate(
    embeddings: ArrayView2<'_, f64>,
    labels: &[usize],
    splits: &Splits,
    runs: usize,
    seed: u64,
    cfg: &ProbeConfig,
) -> Result<ProbeSummary> {
    if runs == 0 {
        return Err(Error::Param("probe runs must be >= 1".into()));
    }
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let runs = (0..runs)
        .map(|r| {
            let mut rng = stream(seed, Phase::Probe, 0, r as u64);
            probe_run(embeddings, labels, splits, num_classes, cfg, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let accs: Vec<f64> = runs.iter().map(|r| r.test_acc).collect();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / accs.len() as f64;
    Ok(ProbeSummary {
        runs,
        mean,
        std: var.sqrt(),
    })
}

/// Best validation accuracy of a single probe run; used as the
/// early-stopping signal.
pub fn validation_accuracy(
    embeddings: ArrayView2<'_, f64>,
    labels: &[usize],
    splits: &Splits,
    num_classes: usize,
    seed: u64,
    cfg: &ProbeConfig,
) -> Result<f64> {
    // The test split is not looked at here; reuse val so the run can proceed.
    let splits = Splits {
        train: splits.train.clone(),
        val: splits.val.clone(),
        test: splits.val.clone(),
    };
    let mut rng = stream(seed, Phase::Probe, 1, 0);
    Ok(probe_run(embeddings, labels, &splits, num_classes, cfg, &mut rng)?.val_acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn splits(n: usize) -> Splits {
        let idx: Vec<usize> = (0..n).collect();
        Splits {
            train: idx[..n / 2].to_vec(),
            val: idx[n / 2..3 * n / 4].to_vec(),
            test: idx[3 * n / 4..].to_vec(),
        }
    }

    #[test]
    fn one_hot_embeddings_are_perfect() {
        let labels: Vec<usize> = (0..70).map(|i| i % 7).collect();
        let x = Array2::from_shape_fn((70, 7), |(i, j)| f64::from(labels[i] == j));
        let s = linear_evaluate(x.view(), &labels, &splits(70), 3, 1, &ProbeConfig::default()).unwrap();
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.std, 0.0);
    }

    #[test]
    fn shuffled_labels_sit_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 2800;
        let x = Array2::from_shape_fn((n, 16), |_| rng.random::<f64>());
        let mut labels: Vec<usize> = (0..n).map(|i| i % 7).collect();
        labels.shuffle(&mut rng);
        let s = linear_evaluate(x.view(), &labels, &splits(n), 2, 1, &ProbeConfig::default()).unwrap();
        // 700 test points: 1/7 ± 4 binomial sigmas (~0.053)
        assert!((s.mean - 1.0 / 7.0).abs() < 0.06, "{}", s.mean);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((40, 5), |_| rng.random::<f64>());
        let labels: Vec<usize> = (0..40).map(|i| i % 3).collect();
        let cfg = ProbeConfig::default();
        let a = linear_evaluate(x.view(), &labels, &splits(40), 1, 9, &cfg).unwrap();
        let b = linear_evaluate(x.view(), &labels, &splits(40), 1, 9, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_split_is_an_error() {
        let x = Array2::<f64>::zeros((4, 2));
        let s = Splits {
            train: vec![0, 1],
            val: vec![2, 3],
            test: vec![],
        };
        assert!(linear_evaluate(x.view(), &[0, 1, 0, 1], &s, 1, 0, &ProbeConfig::default()).is_err());
        assert!(linear_evaluate(x.view(), &[0, 1, 0, 1], &splits(4), 0, 0, &ProbeConfig::default()).is_err());
    }
}
