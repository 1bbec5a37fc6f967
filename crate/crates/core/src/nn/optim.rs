use super::{Gradients, NetworkParams, NnError, Real};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RmsPropConfig {
    pub lr: f64,
    pub alpha: f64,
    pub eps: f64,
    /// Starting value of every squared-gradient accumulator.
    pub initial_accumulator: f64,
    /// Adds `eps` under the square root instead of after it.
    pub eps_inside_sqrt: bool,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            lr: 7e-4,
            alpha: 0.99,
            eps: 1e-5,
            initial_accumulator: 0.0,
            eps_inside_sqrt: false,
        }
    }
}

/// Non-centered RMSProp without momentum:
///
/// ```text
/// acc   <- alpha * acc + (1 - alpha) * g^2
/// theta <- theta - lr * g / (sqrt(acc) + eps)
/// ```
///
/// or `sqrt(acc + eps)` in the denominator with `eps_inside_sqrt`.
///
/// Frozen layers carry no accumulator and are never written.
#[derive(Clone, Debug)]
pub struct RmsProp<T = f32> {
    pub config: RmsPropConfig,
    acc: Vec<Option<(Vec<T>, Vec<T>)>>,
}

impl<T: Real> RmsProp<T> {
    pub fn new(config: RmsPropConfig, params: &NetworkParams<T>) -> Self {
        let a0 = T::from_f64_lossy(config.initial_accumulator);
        let acc = params
            .layers
            .iter()
            .zip(&params.freeze_mask)
            .map(|(l, &frozen)| (!frozen).then(|| (vec![a0; l.weight.len()], vec![a0; l.bias.len()])))
            .collect();
        RmsProp { config, acc }
    }

    /// Squared-gradient accumulators of layer `index`, if it is trainable.
    pub fn accumulator(&self, index: usize) -> Option<(&[T], &[T])> {
        self.acc[index].as_ref().map(|(w, b)| (w.as_slice(), b.as_slice()))
    }

    pub fn step(&mut self, params: &mut NetworkParams<T>, grads: &Gradients<T>) -> Result<(), NnError> {
        if grads.layers.len() != params.layers.len() {
            return Err(NnError::Shape("gradient layer count".into()));
        }
        let lr = T::from_f64_lossy(self.config.lr);
        let alpha = T::from_f64_lossy(self.config.alpha);
        let eps = T::from_f64_lossy(self.config.eps);
        let one_minus = T::one() - alpha;
        let inside = self.config.eps_inside_sqrt;
        for (i, layer) in params.layers.iter_mut().enumerate() {
            if params.freeze_mask[i] {
                continue;
            }
            let (Some(g), Some((acc_w, acc_b))) = (&grads.layers[i], self.acc[i].as_mut()) else {
                return Err(NnError::Shape(format!("missing gradient or accumulator for trainable layer {}", layer.name)));
            };
            if g.weight.len() != layer.weight.len() || g.bias.len() != layer.bias.len() {
                return Err(NnError::Shape(format!("gradient shape for layer {}", layer.name)));
            }
            let update = |theta: &mut [T], acc: &mut [T], grad: &[T]| {
                for ((t, a), &g) in theta.iter_mut().zip(acc.iter_mut()).zip(grad) {
                    *a = alpha * *a + one_minus * g * g;
                    let denom = if inside { (*a + eps).sqrt() } else { a.sqrt() + eps };
                    *t = *t - lr * g / denom;
                }
            };
            update(&mut layer.weight, acc_w, &g.weight);
            update(&mut layer.bias, acc_b, &g.bias);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Heads, LayerGrad};

    fn zero_grads(p: &NetworkParams<f64>) -> Gradients<f64> {
        Gradients {
            layers: p
                .layers
                .iter()
                .zip(&p.freeze_mask)
                .map(|(l, &f)| {
                    (!f).then(|| LayerGrad {
                        weight: vec![0.0; l.weight.len()],
                        bias: vec![0.0; l.bias.len()],
                    })
                })
                .collect(),
        }
    }

    #[test]
    fn single_update_matches_hand_computation() {
        let mut p = NetworkParams::<f64>::zeros(Heads::ActorCritic);
        let mut opt = RmsProp::new(RmsPropConfig::default(), &p);
        let mut g = zero_grads(&p);
        g.layers[5].as_mut().unwrap().bias[0] = 1.0;
        opt.step(&mut p, &g).unwrap();
        // acc = 0.01, step = lr / (sqrt(0.01) + eps)
        let expected = -7e-4 / (0.1 + 1e-5);
        assert!((p.layers[5].bias[0] - expected).abs() < 1e-15);
        assert!((opt.accumulator(5).unwrap().1[0] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_accumulator() {
        let mut p = NetworkParams::<f64>::init(Heads::ActorCritic, 4);
        let mut opt = RmsProp::new(RmsPropConfig::default(), &p);
        let mut g = zero_grads(&p);
        g.layers[4].as_mut().unwrap().weight[7] = 0.5;
        opt.step(&mut p, &g).unwrap();
        let before = p.clone();
        let acc_before = opt.accumulator(4).unwrap().0[7];
        let zeros = zero_grads(&p);
        opt.step(&mut p, &zeros).unwrap();
        assert_eq!(p, before);
        assert!((opt.accumulator(4).unwrap().0[7] - 0.99 * acc_before).abs() < 1e-18);
    }

    #[test]
    fn frozen_layers_are_untouched() {
        let mut p = NetworkParams::<f64>::init(Heads::ActorCritic, 4);
        p.freeze_mask[0] = true;
        let snapshot = p.layers[0].clone();
        let mut opt = RmsProp::new(RmsPropConfig::default(), &p);
        assert!(opt.accumulator(0).is_none());
        let mut g = zero_grads(&p);
        for l in g.layers.iter_mut().flatten() {
            l.weight.iter_mut().for_each(|x| *x = 1.0);
        }
        for _ in 0..100 {
            opt.step(&mut p, &g).unwrap();
        }
        assert_eq!(p.layers[0], snapshot);
        assert_ne!(p.layers[1].weight, NetworkParams::<f64>::init(Heads::ActorCritic, 4).layers[1].weight);
    }

    #[test]
    fn missing_gradient_for_trainable_layer_is_an_error() {
        let mut p = NetworkParams::<f64>::zeros(Heads::ActorCritic);
        let mut opt = RmsProp::new(RmsPropConfig::default(), &p);
        let mut g = zero_grads(&p);
        g.layers[2] = None;
        assert!(opt.step(&mut p, &g).is_err());
    }
}
