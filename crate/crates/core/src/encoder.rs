//! Two-layer GCN encoder with a mean+max sigmoid readout, hand-written
//! reverse-mode gradients, Xavier initialization and Adam.
//!
//! Forward pass for a subgraph view with normalized adjacency `Ã` and
//! features `X`:
//!
//! ```text
//! Z1 = Ã · drop(X) · W1        A1 = relu(Z1)
//! Z2 = Ã · drop(A1) · W2       H  = relu(Z2)
//! h  = sigmoid(mean_rows(H) + max_rows(H))
//! ```
//!
//! Dropout is inverted (kept entries scaled by `1 / (1 - p)`) and only active
//! in training mode. There are no bias terms.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::SubgraphView;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderDims {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl EncoderDims {
    pub fn new(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            input,
            hidden,
            output,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
}

impl EncoderParams {
    pub fn zeros(dims: EncoderDims) -> Self {
        Self {
            w1: Array2::zeros((dims.input, dims.hidden)),
            w2: Array2::zeros((dims.hidden, dims.output)),
        }
    }

    pub fn dims(&self) -> EncoderDims {
        EncoderDims::new(self.w1.nrows(), self.w1.ncols(), self.w2.ncols())
    }

    pub fn validate(&self) -> Result<()> {
        if self.w1.ncols() != self.w2.nrows() {
            return Err(Error::Contract(format!(
                "W1 is {:?} but W2 is {:?}",
                self.w1.dim(),
                self.w2.dim()
            )));
        }
        if self.w1.iter().chain(self.w2.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("encoder weight".into()));
        }
        Ok(())
    }
}

/// Gradients with the same shapes as [`EncoderParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
}

impl EncoderGrads {
    pub fn zeros(dims: EncoderDims) -> Self {
        let p = EncoderParams::zeros(dims);
        Self { w1: p.w1, w2: p.w2 }
    }

    pub fn add_assign(&mut self, other: &EncoderGrads) {
        self.w1 += &other.w1;
        self.w2 += &other.w2;
    }

    pub fn scale(&mut self, factor: f64) {
        self.w1 *= factor;
        self.w2 *= factor;
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().chain(self.w2.iter()).all(|x| x.is_finite())
    }
}

/// Xavier/Glorot uniform initialization: each layer's entries are drawn from
/// `U(-b, b)` with `b = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_init(dims: EncoderDims, seed: u64) -> Result<EncoderParams> {
    if dims.input == 0 || dims.hidden == 0 || dims.output == 0 {
        return Err(Error::Param(format!("encoder dims must be >= 1, got {dims:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = |rows: usize, cols: usize| {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        Array2::from_shape_simple_fn((rows, cols), || dist.sample(&mut rng))
    };
    let w1 = layer(dims.input, dims.hidden);
    let w2 = layer(dims.hidden, dims.output);
    Ok(EncoderParams { w1, w2 })
}

/// Intermediates of one forward pass, consumed by [`encoder_backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    norm_adj: Array2<f64>,
    /// Nonzero entries of the (dropped, rescaled) input, per local row.
    input: Vec<Vec<(usize, f64)>>,
    z1: Array2<f64>,
    /// Inverted-dropout scale per hidden entry (`None` when dropout is off).
    hidden_mask: Option<Array2<f64>>,
    hidden: Array2<f64>,
    z2: Array2<f64>,
    dims: EncoderDims,
}

impl ForwardCache {
    pub fn num_nodes(&self) -> usize {
        self.z1.nrows()
    }
}

/// Runs both GCN layers over `view`. `rng` is only drawn from when
/// `training` is set and `dropout_p > 0`.
pub fn gcn_forward<R: Rng + ?Sized>(
    params: &EncoderParams,
    view: &SubgraphView,
    dropout_p: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Array2<f64>, ForwardCache)> {
    gcn_forward_raw(
        params,
        view.norm_adj.values().view(),
        view.features.view(),
        dropout_p,
        training,
        rng,
    )
}

pub(crate) fn gcn_forward_raw<R: Rng + ?Sized>(
    params: &EncoderParams,
    norm_adj: ArrayView2<'_, f64>,
    features: ArrayView2<'_, f64>,
    dropout_p: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Array2<f64>, ForwardCache)> {
    let dims = params.dims();
    let n = features.nrows();
    if features.ncols() != dims.input {
        return Err(Error::Contract(format!(
            "view has {} feature columns, encoder expects {}",
            features.ncols(),
            dims.input
        )));
    }
    if norm_adj.dim() != (n, n) {
        return Err(Error::Contract(format!(
            "adjacency {:?} does not match {n} feature rows",
            norm_adj.dim()
        )));
    }
    if !(0.0..1.0).contains(&dropout_p) {
        return Err(Error::Param(format!("dropout {dropout_p} not in [0, 1)")));
    }
    let active = training && dropout_p > 0.0;
    let keep_scale = 1.0 / (1.0 - dropout_p);

    let mut input = Vec::with_capacity(n);
    let mut xw = Array2::<f64>::zeros((n, dims.hidden));
    for (r, row) in features.rows().into_iter().enumerate() {
        let mut nz = Vec::new();
        for (c, &x) in row.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let v = if active {
                if rng.random::<f64>() < dropout_p {
                    continue;
                }
                x * keep_scale
            } else {
                x
            };
            xw.row_mut(r).scaled_add(v, &params.w1.row(c));
            nz.push((c, v));
        }
        input.push(nz);
    }
    let z1 = norm_adj.dot(&xw);

    let mut hidden = z1.mapv(|x| x.max(0.0));
    let hidden_mask = if active {
        let mask = Array2::from_shape_simple_fn(hidden.dim(), || {
            if rng.random::<f64>() < dropout_p {
                0.0
            } else {
                keep_scale
            }
        });
        hidden *= &mask;
        Some(mask)
    } else {
        None
    };

    let z2 = norm_adj.dot(&hidden.dot(&params.w2));
    let h = z2.mapv(|x| x.max(0.0));
    Ok((
        h,
        ForwardCache {
            norm_adj: norm_adj.to_owned(),
            input,
            z1,
            hidden_mask,
            hidden,
            z2,
            dims,
        },
    ))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Readout output plus what its backward pass needs.
#[derive(Debug, Clone)]
pub struct ReadoutCache {
    pub h: Array1<f64>,
    /// Row holding each column's maximum (first row wins ties).
    pub argmax: Vec<usize>,
    pub rows: usize,
}

/// `sigmoid(mean_rows(H) + max_rows(H))`.
pub fn readout(h: ArrayView2<'_, f64>) -> Result<ReadoutCache> {
    let n = h.nrows();
    if n == 0 {
        return Err(Error::Contract("readout of an empty embedding set".into()));
    }
    let mut argmax = vec![0usize; h.ncols()];
    let mut out = Array1::<f64>::zeros(h.ncols());
    let mut sorted = Vec::with_capacity(n);
    for (c, col) in h.axis_iter(Axis(1)).enumerate() {
        let mut best = 0;
        for r in 1..n {
            if col[r] > col[best] {
                best = r;
            }
        }
        argmax[c] = best;
        // summing in sorted order keeps the result independent of row order
        sorted.clear();
        sorted.extend(col.iter().copied());
        sorted.sort_unstable_by(f64::total_cmp);
        out[c] = sigmoid(sorted.iter().sum::<f64>() / n as f64 + col[best]);
    }
    Ok(ReadoutCache {
        h: out,
        argmax,
        rows: n,
    })
}

/// Forward pass followed by readout.
#[derive(Debug, Clone)]
pub struct EncodeCache {
    pub forward: ForwardCache,
    pub readout: ReadoutCache,
}

impl EncodeCache {
    pub fn embedding(&self) -> &Array1<f64> {
        &self.readout.h
    }
}

pub fn encode<R: Rng + ?Sized>(
    params: &EncoderParams,
    view: &SubgraphView,
    dropout_p: f64,
    training: bool,
    rng: &mut R,
) -> Result<EncodeCache> {
    let (h, forward) = gcn_forward(params, view, dropout_p, training, rng)?;
    let readout = readout(h.view())?;
    Ok(EncodeCache { forward, readout })
}

/// Accumulates `∂(grad_h · h)/∂W` into `grads`.
pub fn encoder_backward_into(
    cache: &EncodeCache,
    params: &EncoderParams,
    grad_h: ArrayView1<'_, f64>,
    grads: &mut EncoderGrads,
) -> Result<()> {
    let fwd = &cache.forward;
    let ro = &cache.readout;
    let dims = params.dims();
    let n = fwd.num_nodes();
    if fwd.dims != dims
        || grads.w1.dim() != params.w1.dim()
        || grads.w2.dim() != params.w2.dim()
        || grad_h.len() != dims.output
        || ro.rows != n
        || ro.h.len() != dims.output
    {
        return Err(Error::Contract(
            "stale forward cache or mismatched gradient shapes".into(),
        ));
    }

    // d(loss)/d(pre-sigmoid readout sum)
    let ds: Array1<f64> = Zip::from(&grad_h)
        .and(&ro.h)
        .map_collect(|&g, &h| g * h * (1.0 - h));
    let mut d_h = Array2::<f64>::zeros((n, dims.output));
    for (c, &dsc) in ds.iter().enumerate() {
        if dsc == 0.0 {
            continue;
        }
        let share = dsc / n as f64;
        d_h.column_mut(c).fill(share);
        d_h[[ro.argmax[c], c]] += dsc;
    }

    Zip::from(&mut d_h).and(&fwd.z2).for_each(|g, &z| {
        if z <= 0.0 {
            *g = 0.0;
        }
    });
    let g2 = fwd.norm_adj.t().dot(&d_h);
    grads.w2 += &fwd.hidden.t().dot(&g2);

    let mut d_a1 = g2.dot(&params.w2.t());
    if let Some(mask) = &fwd.hidden_mask {
        d_a1 *= mask;
    }
    Zip::from(&mut d_a1).and(&fwd.z1).for_each(|g, &z| {
        if z <= 0.0 {
            *g = 0.0;
        }
    });
    let g1 = fwd.norm_adj.t().dot(&d_a1);
    for (r, nz) in fwd.input.iter().enumerate() {
        let g_row = g1.row(r);
        for &(c, v) in nz {
            grads.w1.row_mut(c).scaled_add(v, &g_row);
        }
    }
    Ok(())
}

pub fn encoder_backward(
    cache: &EncodeCache,
    params: &EncoderParams,
    grad_h: ArrayView1<'_, f64>,
) -> Result<EncoderGrads> {
    let mut grads = EncoderGrads::zeros(params.dims());
    encoder_backward_into(cache, params, grad_h, &mut grads)?;
    Ok(grads)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: EncoderGrads,
    pub v: EncoderGrads,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(dims: EncoderDims, config: AdamConfig) -> Self {
        Self {
            m: EncoderGrads::zeros(dims),
            v: EncoderGrads::zeros(dims),
            t: 0,
            config,
        }
    }
}

/// One bias-corrected Adam update over flat slices. `t` is the step number
/// after incrementing (first step is 1).
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    cfg: &AdamConfig,
) {
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

pub fn adam_step(params: &mut EncoderParams, grads: &EncoderGrads, state: &mut AdamState) -> Result<()> {
    if grads.w1.dim() != params.w1.dim() || grads.w2.dim() != params.w2.dim() {
        return Err(Error::Contract("gradient shapes do not match parameters".into()));
    }
    state.t += 1;
    let t = state.t;
    let cfg = state.config;
    for (p, g, m, v) in [
        (&mut params.w1, &grads.w1, &mut state.m.w1, &mut state.v.w1),
        (&mut params.w2, &grads.w2, &mut state.m.w2, &mut state.v.w2),
    ] {
        adam_update(
            p.as_slice_mut().expect("standard layout"),
            g.as_slice().expect("standard layout"),
            m.as_slice_mut().expect("standard layout"),
            v.as_slice_mut().expect("standard layout"),
            t,
            &cfg,
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NormalizedAdj;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn view(n: usize, edges: &[(usize, usize)], features: Array2<f64>) -> SubgraphView {
        SubgraphView {
            anchor: 0,
            local_to_global: (0..n).collect(),
            local_edges: edges.to_vec(),
            norm_adj: NormalizedAdj::from_edges(n, edges).unwrap(),
            features,
        }
    }

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn xavier_bound_and_determinism() {
        let dims = EncoderDims::new(4, 4, 4);
        let p = xavier_init(dims, 9).unwrap();
        let bound = (6.0f64 / 8.0).sqrt();
        assert!(p.w1.iter().chain(p.w2.iter()).all(|x| x.abs() <= bound));
        assert_eq!(p, xavier_init(dims, 9).unwrap());
        assert_ne!(p, xavier_init(dims, 10).unwrap());
        assert!(xavier_init(EncoderDims::new(0, 1, 1), 0).is_err());
    }

    #[test]
    fn xavier_variance() {
        let p = xavier_init(EncoderDims::new(1000, 512, 512), 3).unwrap();
        let n = p.w1.len() as f64;
        let mean = p.w1.sum() / n;
        let var = p.w1.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let expected = 2.0 / (1000.0 + 512.0);
        assert!((var - expected).abs() < 0.1 * expected, "{var} vs {expected}");
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = view(3, &[(0, 1)], random_matrix(3, 4, &mut rng));
        let p = EncoderParams::zeros(EncoderDims::new(4, 5, 6));
        let (h, _) = gcn_forward(&p, &v, 0.0, false, &mut rng).unwrap();
        assert!(h.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_node_is_plain_mlp() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_matrix(1, 3, &mut rng);
        let v = view(1, &[], x.clone());
        let p = xavier_init(EncoderDims::new(3, 4, 2), 5).unwrap();
        let (h, _) = gcn_forward(&p, &v, 0.5, false, &mut rng).unwrap();
        let expect = x.dot(&p.w1).mapv(|z: f64| z.max(0.0)).dot(&p.w2).mapv(|z: f64| z.max(0.0));
        for (a, b) in h.iter().zip(expect.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = view(2, &[(0, 1)], Array2::ones((2, 3)));
        let p = EncoderParams::zeros(EncoderDims::new(4, 2, 2));
        assert!(matches!(
            gcn_forward(&p, &v, 0.0, false, &mut rng),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn dropout_changes_training_output_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = view(4, &[(0, 1), (1, 2), (2, 3)], random_matrix(4, 6, &mut rng).mapv(f64::abs));
        let p = xavier_init(EncoderDims::new(6, 8, 5), 1).unwrap();
        let (e1, _) = gcn_forward(&p, &v, 0.7, false, &mut rng).unwrap();
        let (e2, _) = gcn_forward(&p, &v, 0.7, false, &mut rng).unwrap();
        assert_eq!(e1, e2);
        let (t1, _) = gcn_forward(&p, &v, 0.7, true, &mut rng).unwrap();
        assert_ne!(t1, e1);
    }

    #[test]
    fn readout_values() {
        let one = readout(array![[0.3, -2.0]].view()).unwrap();
        assert_abs_diff_eq!(one.h[0], sigmoid(0.6), epsilon = 1e-15);
        assert_abs_diff_eq!(one.h[1], sigmoid(-4.0), epsilon = 1e-15);

        let two = readout(array![[1.0, -1.0], [3.0, 1.0]].view()).unwrap();
        assert_abs_diff_eq!(two.h[0], 0.99331, epsilon = 1e-5);
        assert_abs_diff_eq!(two.h[1], 0.73106, epsilon = 1e-5);
        assert_eq!(two.argmax, vec![1, 1]);

        let swapped = readout(array![[3.0, 1.0], [1.0, -1.0]].view()).unwrap();
        assert_eq!(swapped.h, two.h);

        assert!(readout(Array2::<f64>::zeros((0, 2)).view()).is_err());
    }

    #[test]
    fn readout_tie_goes_to_first_row() {
        let r = readout(array![[2.0], [2.0], [1.0]].view()).unwrap();
        assert_eq!(r.argmax, vec![0]);
    }

    #[test]
    fn zero_upstream_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = view(3, &[(0, 1), (1, 2)], random_matrix(3, 4, &mut rng));
        let p = xavier_init(EncoderDims::new(4, 5, 5), 2).unwrap();
        let cache = encode(&p, &v, 0.0, false, &mut rng).unwrap();
        let g = encoder_backward(&cache, &p, Array1::zeros(5).view()).unwrap();
        assert!(g.w1.iter().chain(g.w2.iter()).all(|&x| x == 0.0));
    }

    #[test]
    fn stale_cache_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = view(2, &[(0, 1)], random_matrix(2, 4, &mut rng));
        let p = xavier_init(EncoderDims::new(4, 5, 5), 2).unwrap();
        let cache = encode(&p, &v, 0.0, false, &mut rng).unwrap();
        let other = xavier_init(EncoderDims::new(4, 6, 5), 2).unwrap();
        assert!(encoder_backward(&cache, &other, Array1::ones(5).view()).is_err());
    }

    #[test]
    fn duplicate_rows_route_max_to_first() {
        // Two identical nodes: Ã is the 2-node matrix of all 0.5, so H rows match.
        let x = array![[1.0, 0.5], [1.0, 0.5]];
        let v = view(2, &[(0, 1)], x);
        let p = EncoderParams {
            w1: array![[1.0, 0.2], [0.3, 1.0]],
            w2: array![[1.0], [0.5]],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cache = encode(&p, &v, 0.0, false, &mut rng).unwrap();
        assert_eq!(cache.readout.argmax, vec![0]);
    }

    fn scalar_objective(p: &EncoderParams, v: &SubgraphView, dir: &Array1<f64>) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = encode(p, v, 0.0, false, &mut rng).unwrap();
        c.readout.h.dot(dir)
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v = view(3, &[(0, 1), (1, 2)], random_matrix(3, 4, &mut rng));
        let p = xavier_init(EncoderDims::new(4, 5, 5), 7).unwrap();
        let dir = Array1::from_shape_simple_fn(5, || rng.random_range(-1.0..1.0));
        let cache = encode(&p, &v, 0.0, false, &mut rng).unwrap();
        let g = encoder_backward(&cache, &p, dir.view()).unwrap();

        let step = 1e-5;
        let check = |analytic: f64, plus: f64, minus: f64| {
            let fd = (plus - minus) / (2.0 * step);
            let denom = analytic.abs().max(fd.abs()).max(1e-8);
            assert!((analytic - fd).abs() / denom < 1e-4, "{analytic} vs {fd}");
        };
        for idx in ndarray::indices(p.w1.dim()) {
            let mut a = p.clone();
            a.w1[idx] += step;
            let mut b = p.clone();
            b.w1[idx] -= step;
            check(g.w1[idx], scalar_objective(&a, &v, &dir), scalar_objective(&b, &v, &dir));
        }
        for idx in ndarray::indices(p.w2.dim()) {
            let mut a = p.clone();
            a.w2[idx] += step;
            let mut b = p.clone();
            b.w2[idx] -= step;
            check(g.w2[idx], scalar_objective(&a, &v, &dir), scalar_objective(&b, &v, &dir));
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut p = xavier_init(EncoderDims::new(3, 3, 3), 1).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(p.dims(), AdamConfig::default());
        let zero = EncoderGrads::zeros(p.dims());
        adam_step(&mut p, &zero, &mut st).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let cfg = AdamConfig::default();
        for g in [3.0, -0.02] {
            let (mut w, mut m, mut v) = ([0.0], [0.0], [0.0]);
            adam_update(&mut w, &[g], &mut m, &mut v, 1, &cfg);
            assert_abs_diff_eq!(w[0], -cfg.lr * f64::signum(g), epsilon = 1e-9);
        }
    }

    #[test]
    fn adam_descends_quadratic() {
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        let (mut w, mut m, mut v) = ([1.0], [0.0], [0.0]);
        let mut envelope = 1.0f64;
        for t in 1..=100 {
            let g = 2.0 * w[0];
            adam_update(&mut w, &[g], &mut m, &mut v, t, &cfg);
            assert!(w[0].abs() <= envelope + 1e-12);
            envelope = envelope.min(w[0].abs());
        }
        assert!(w[0].abs() < 0.5, "{}", w[0]);
    }
}
