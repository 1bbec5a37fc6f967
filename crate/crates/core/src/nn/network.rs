use super::{batch_size, col2im, im2col, matmul, Gradients, Heads, LayerGrad, Layout, Mat, NetworkParams, NnError, Real, CONV, FLAT_LEN, HIDDEN};

/// Head outputs for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Outputs<T> {
    pub batch: usize,
    /// `batch x logit_count`, row-major.
    pub logits: Vec<T>,
    pub logit_count: usize,
    /// State values; `None` for the locator head.
    pub values: Option<Vec<T>>,
}

impl<T: Real> Outputs<T> {
    pub fn logits_row(&self, i: usize) -> &[T] {
        &self.logits[i * self.logit_count..(i + 1) * self.logit_count]
    }
}

/// Activations kept for the backward pass. ReLU masks are recovered from the
/// post-activation values (`a > 0` iff the pre-activation was positive).
pub struct ForwardCache<T> {
    batch: usize,
    cols: [Vec<T>; 3],
    acts: [Vec<T>; 3],
    flat: Vec<T>,
    hidden: Vec<T>,
}

impl<T: Real> ForwardCache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Post-ReLU output of conv layer `index` (0-based), channel-major.
    pub fn conv_activation(&self, index: usize) -> &[T] {
        &self.acts[index]
    }

    /// Sign pattern of every ReLU in the network; equal patterns mean two
    /// parameter settings lie in the same linear region.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.acts.iter().flatten().chain(&self.hidden).map(|&a| a > T::zero()).collect()
    }
}

fn relu_in_place<T: Real>(xs: &mut [T]) {
    for x in xs {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

/// Runs the first `depth` convolutions (1..=3), filling `cols` and `acts`.
fn conv_stack<T: Real>(params: &NetworkParams<T>, inputs: &[f32], batch: usize, depth: usize, cols: &mut [Vec<T>; 3], acts: &mut [Vec<T>; 3]) {
    for (i, geom) in CONV.iter().enumerate().take(depth) {
        if i == 0 {
            im2col(inputs, Layout::SampleMajor, geom, batch, &mut cols[0]);
        } else {
            let (prev, _) = acts.split_at(i);
            im2col(&prev[i - 1], Layout::ChannelMajor, geom, batch, &mut cols[i]);
        }
        let layer = &params.layers[i];
        let n = batch * geom.out_size() * geom.out_size();
        let out = &mut acts[i];
        out.clear();
        out.reserve(geom.out_channels * n);
        for &b in &layer.bias {
            out.extend(std::iter::repeat_n(b, n));
        }
        matmul(
            Mat::new(&layer.weight, geom.out_channels, geom.patch_len()),
            Mat::new(&cols[i], geom.patch_len(), n),
            T::one(),
            out,
        );
        relu_in_place(out);
    }
}

fn dense<T: Real>(input: &[T], batch: usize, inputs: usize, weight: &[T], bias: &[T]) -> Vec<T> {
    let outputs = bias.len();
    let mut out = Vec::with_capacity(batch * outputs);
    for _ in 0..batch {
        out.extend_from_slice(bias);
    }
    matmul(Mat::new(input, batch, inputs), Mat::t(weight, inputs, outputs), T::one(), &mut out);
    out
}

pub fn forward_train<T: Real>(params: &NetworkParams<T>, inputs: &[f32]) -> Result<(Outputs<T>, ForwardCache<T>), NnError> {
    let batch = batch_size(inputs)?;
    params.check_shapes()?;
    let mut cols: [Vec<T>; 3] = Default::default();
    let mut acts: [Vec<T>; 3] = Default::default();
    conv_stack(params, inputs, batch, 3, &mut cols, &mut acts);

    let plane = CONV[2].out_size() * CONV[2].out_size();
    let channels = CONV[2].out_channels;
    let mut flat = vec![T::zero(); batch * FLAT_LEN];
    for c in 0..channels {
        for b in 0..batch {
            let src = &acts[2][(c * batch + b) * plane..(c * batch + b + 1) * plane];
            flat[b * FLAT_LEN + c * plane..b * FLAT_LEN + (c + 1) * plane].copy_from_slice(src);
        }
    }

    let fc = &params.layers[3];
    let mut hidden = dense(&flat, batch, FLAT_LEN, &fc.weight, &fc.bias);
    relu_in_place(&mut hidden);

    let head = &params.layers[4];
    let logits = dense(&hidden, batch, HIDDEN, &head.weight, &head.bias);
    let logit_count = head.bias.len();
    let values = match params.heads {
        Heads::ActorCritic => {
            let v = &params.layers[5];
            Some(dense(&hidden, batch, HIDDEN, &v.weight, &v.bias))
        }
        Heads::Locator => None,
    };
    Ok((
        Outputs {
            batch,
            logits,
            logit_count,
            values,
        },
        ForwardCache {
            batch,
            cols,
            acts,
            flat,
            hidden,
        },
    ))
}

/// Inference pass; `inputs` is a flat batch of observations.
pub fn forward<T: Real>(params: &NetworkParams<T>, inputs: &[f32]) -> Result<Outputs<T>, NnError> {
    forward_train(params, inputs).map(|(o, _)| o)
}

/// Post-ReLU activation grids of conv layer `layer` (1-based) for one observation,
/// one `out_size * out_size` grid per channel.
pub fn feature_maps<T: Real>(params: &NetworkParams<T>, observation: &[f32], layer: usize) -> Result<Vec<Vec<T>>, NnError> {
    if !(1..=3).contains(&layer) {
        return Err(NnError::Shape(format!("conv layer {layer} outside 1..=3")));
    }
    if batch_size(observation)? != 1 {
        return Err(NnError::Shape("feature maps take a single observation".into()));
    }
    let mut cols: [Vec<T>; 3] = Default::default();
    let mut acts: [Vec<T>; 3] = Default::default();
    conv_stack(params, observation, 1, layer, &mut cols, &mut acts);
    let geom = CONV[layer - 1];
    let plane = geom.out_size() * geom.out_size();
    Ok(acts[layer - 1].chunks(plane).map(<[T]>::to_vec).collect())
}

fn column_sums<T: Real>(m: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut s = vec![T::zero(); cols];
    for r in 0..rows {
        for (acc, &v) in s.iter_mut().zip(&m[r * cols..(r + 1) * cols]) {
            *acc += v;
        }
    }
    s
}

fn row_sums<T: Real>(m: &[T], rows: usize, cols: usize) -> Vec<T> {
    (0..rows).map(|r| m[r * cols..(r + 1) * cols].iter().copied().sum()).collect()
}

fn mask_by_relu<T: Real>(grad: &mut [T], act: &[T]) {
    for (g, &a) in grad.iter_mut().zip(act) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Reverse pass from output gradients. Frozen layers get no gradient slot and
/// the pass stops once no trainable layer remains below.
pub fn backward<T: Real>(params: &NetworkParams<T>, cache: &ForwardCache<T>, grad_logits: &[T], grad_values: Option<&[T]>) -> Result<Gradients<T>, NnError> {
    let batch = cache.batch;
    let frozen = &params.freeze_mask;
    let trainable_upto = |i: usize| frozen[..=i].iter().any(|f| !f);
    let mut grads: Vec<Option<LayerGrad<T>>> = vec![None; params.layers.len()];

    let head = &params.layers[4];
    let n_out = head.bias.len();
    if grad_logits.len() != batch * n_out {
        return Err(NnError::Shape(format!(
            "logit gradient has {} entries, expected {}",
            grad_logits.len(),
            batch * n_out
        )));
    }
    let mut heads: Vec<(usize, &[T], usize)> = vec![(4, grad_logits, n_out)];
    if params.heads == Heads::ActorCritic {
        let gv = grad_values.ok_or_else(|| NnError::Shape("actor-critic backward needs value gradients".into()))?;
        if gv.len() != batch {
            return Err(NnError::Shape("value gradient length".into()));
        }
        heads.push((5, gv, 1));
    }

    let mut d_hidden = vec![T::zero(); batch * HIDDEN];
    for &(idx, g, n) in &heads {
        let layer = &params.layers[idx];
        if !frozen[idx] {
            let mut dw = vec![T::zero(); n * HIDDEN];
            matmul(Mat::t(g, n, batch), Mat::new(&cache.hidden, batch, HIDDEN), T::zero(), &mut dw);
            grads[idx] = Some(LayerGrad {
                weight: dw,
                bias: column_sums(g, batch, n),
            });
        }
        if trainable_upto(3) {
            matmul(Mat::new(g, batch, n), Mat::new(&layer.weight, n, HIDDEN), T::one(), &mut d_hidden);
        }
    }
    if !trainable_upto(3) {
        return Ok(Gradients { layers: grads });
    }

    mask_by_relu(&mut d_hidden, &cache.hidden);
    let fc = &params.layers[3];
    if !frozen[3] {
        let mut dw = vec![T::zero(); HIDDEN * FLAT_LEN];
        matmul(Mat::t(&d_hidden, HIDDEN, batch), Mat::new(&cache.flat, batch, FLAT_LEN), T::zero(), &mut dw);
        grads[3] = Some(LayerGrad {
            weight: dw,
            bias: column_sums(&d_hidden, batch, HIDDEN),
        });
    }
    if !trainable_upto(2) {
        return Ok(Gradients { layers: grads });
    }

    let mut d_flat = vec![T::zero(); batch * FLAT_LEN];
    matmul(
        Mat::new(&d_hidden, batch, HIDDEN),
        Mat::new(&fc.weight, HIDDEN, FLAT_LEN),
        T::zero(),
        &mut d_flat,
    );
    let plane = CONV[2].out_size() * CONV[2].out_size();
    let mut d_act = vec![T::zero(); batch * FLAT_LEN];
    for c in 0..CONV[2].out_channels {
        for b in 0..batch {
            d_act[(c * batch + b) * plane..(c * batch + b + 1) * plane].copy_from_slice(&d_flat[b * FLAT_LEN + c * plane..b * FLAT_LEN + (c + 1) * plane]);
        }
    }

    let mut d_cols = Vec::new();
    for i in (0..3).rev() {
        let geom = &CONV[i];
        let n = batch * geom.out_size() * geom.out_size();
        let layer = &params.layers[i];
        mask_by_relu(&mut d_act, &cache.acts[i]);
        if !frozen[i] {
            let mut dw = vec![T::zero(); geom.out_channels * geom.patch_len()];
            matmul(
                Mat::new(&d_act, geom.out_channels, n),
                Mat::t(&cache.cols[i], n, geom.patch_len()),
                T::zero(),
                &mut dw,
            );
            grads[i] = Some(LayerGrad {
                weight: dw,
                bias: row_sums(&d_act, geom.out_channels, n),
            });
        }
        if i == 0 || !trainable_upto(i - 1) {
            break;
        }
        d_cols.clear();
        d_cols.resize(geom.patch_len() * n, T::zero());
        matmul(
            Mat::t(&layer.weight, geom.patch_len(), geom.out_channels),
            Mat::new(&d_act, geom.out_channels, n),
            T::zero(),
            &mut d_cols,
        );
        col2im(&d_cols, geom, batch, &mut d_act);
    }
    Ok(Gradients { layers: grads })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{parse_levels, render, reset, PaletteId, OBS_LEN};

    fn obs_batch(n: usize) -> Vec<f32> {
        let level = parse_levels(
            "; f
##########
#  #     #
# @$.    #
#        #
#   $ .  #
#    #   #
#        #
#   #    #
#        #
##########
",
        )
        .unwrap()
        .remove(0);
        let s = reset(&level).unwrap();
        let mut v = Vec::new();
        let mut state = s;
        for i in 0..n {
            v.extend_from_slice(render(&state, PaletteId::Base).pixels());
            state = crate::engine::step(&state, crate::engine::Action::ALL[i % 4]).0;
        }
        v
    }

    #[test]
    fn zero_network_gives_uniform_policy() {
        let p = NetworkParams::<f32>::zeros(Heads::ActorCritic);
        let out = forward(&p, &obs_batch(3)).unwrap();
        assert!(out.logits.iter().all(|&l| l == 0.0));
        assert!(out.values.unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_inputs_identical_rows() {
        let p = NetworkParams::<f32>::init(Heads::ActorCritic, 5);
        let one = obs_batch(1);
        let mut two = one.clone();
        two.extend_from_slice(&one);
        let out = forward(&p, &two).unwrap();
        assert_eq!(out.logits_row(0), out.logits_row(1));
        let v = out.values.unwrap();
        assert_eq!(v[0], v[1]);
    }

    #[test]
    fn batch_rows_match_single_passes() {
        let p = NetworkParams::<f32>::init(Heads::ActorCritic, 6);
        let batch = obs_batch(4);
        let all = forward(&p, &batch).unwrap();
        for i in 0..4 {
            let single = forward(&p, &batch[i * OBS_LEN..(i + 1) * OBS_LEN]).unwrap();
            for (a, b) in single.logits.iter().zip(all.logits_row(i)) {
                assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn shape_errors_are_reported() {
        let p = NetworkParams::<f32>::init(Heads::ActorCritic, 1);
        assert!(matches!(forward(&p, &[]), Err(NnError::Shape(_))));
        assert!(matches!(forward(&p, &[0.0; 10]), Err(NnError::Shape(_))));
        assert!(feature_maps(&p, &obs_batch(1), 4).is_err());
    }

    #[test]
    fn feature_map_shapes() {
        let p = NetworkParams::<f32>::init(Heads::ActorCritic, 1);
        let o = obs_batch(1);
        for (layer, (channels, side)) in [(1, (32, 20)), (2, (64, 9)), (3, (64, 7))] {
            let maps = feature_maps(&p, &o, layer).unwrap();
            assert_eq!(maps.len(), channels);
            assert!(maps.iter().all(|m| m.len() == side * side));
        }
        let zero = NetworkParams::<f32>::zeros(Heads::ActorCritic);
        assert!(feature_maps(&zero, &o, 1).unwrap().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn frozen_layers_have_no_gradient() {
        let mut p = NetworkParams::<f32>::init(Heads::ActorCritic, 2);
        p.freeze_mask[0] = true;
        p.freeze_mask[1] = true;
        let (out, cache) = forward_train(&p, &obs_batch(2)).unwrap();
        let gl = vec![0.1f32; out.logits.len()];
        let gv = vec![0.2f32; 2];
        let g = backward(&p, &cache, &gl, Some(&gv)).unwrap();
        assert!(g.layers[0].is_none() && g.layers[1].is_none());
        assert!(g.layers[2..].iter().all(Option::is_some));

        p.freeze_mask = vec![false, false, false, true, true, true];
        let g = backward(&p, &cache, &gl, Some(&gv)).unwrap();
        assert!(g.layers[..3].iter().all(Option::is_some));
        assert!(g.layers[3..].iter().all(Option::is_none));
    }
}
