//! Patch extraction for convolutions expressed as matrix products.
//!
//! Column matrices have one row per `(channel, ky, kx)` and one column per
//! `(sample, oy, ox)`, so `weights (out x patch) * cols` yields activations in
//! channel-major batch layout `[channel][sample][y][x]`.

use super::{ConvGeom, Real};

/// Memory order of a 4-d activation tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// `[sample][channel][y][x]`, how observations arrive.
    SampleMajor,
    /// `[channel][sample][y][x]`, how convolution outputs are produced.
    ChannelMajor,
}

impl Layout {
    fn strides(self, channels: usize, batch: usize, plane: usize) -> (usize, usize) {
        match self {
            Layout::SampleMajor => (plane, channels * plane),
            Layout::ChannelMajor => (batch * plane, plane),
        }
    }
}

pub fn im2col<S: Real, T: Real>(input: &[S], layout: Layout, geom: &ConvGeom, batch: usize, cols: &mut Vec<T>) {
    let (k, s, size) = (geom.kernel, geom.stride, geom.in_size);
    let out = geom.out_size();
    let plane = size * size;
    assert_eq!(input.len(), geom.in_channels * batch * plane, "im2col input");
    let (sc, sb) = layout.strides(geom.in_channels, batch, plane);
    let ncols = batch * out * out;
    cols.clear();
    cols.resize(geom.patch_len() * ncols, T::zero());
    for c in 0..geom.in_channels {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for b in 0..batch {
                    let base = c * sc + b * sb;
                    for oy in 0..out {
                        let src_row = base + (oy * s + ky) * size + kx;
                        let d = &mut dst[(b * out + oy) * out..(b * out + oy + 1) * out];
                        for (ox, v) in d.iter_mut().enumerate() {
                            *v = T::from_f64_lossy(input[src_row + ox * s].to_f64_lossless());
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`] for channel-major inputs: scatters column gradients back
/// onto a `[channel][sample][y][x]` buffer (overwritten).
pub fn col2im<T: Real>(cols: &[T], geom: &ConvGeom, batch: usize, grad_input: &mut Vec<T>) {
    let (k, s, size) = (geom.kernel, geom.stride, geom.in_size);
    let out = geom.out_size();
    let plane = size * size;
    let ncols = batch * out * out;
    assert_eq!(cols.len(), geom.patch_len() * ncols, "col2im input");
    grad_input.clear();
    grad_input.resize(geom.in_channels * batch * plane, T::zero());
    for c in 0..geom.in_channels {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for b in 0..batch {
                    let base = (c * batch + b) * plane;
                    for oy in 0..out {
                        let dst_row = base + (oy * s + ky) * size + kx;
                        let sr = &src[(b * out + oy) * out..(b * out + oy + 1) * out];
                        for (ox, &v) in sr.iter().enumerate() {
                            grad_input[dst_row + ox * s] += v;
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)> for channel-major inputs
        let geom = ConvGeom {
            in_channels: 2,
            out_channels: 1,
            kernel: 3,
            stride: 2,
            in_size: 7,
        };
        let batch = 2;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let x: Vec<f64> = (0..2 * batch * 49).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut cols = Vec::new();
        im2col(&x, Layout::ChannelMajor, &geom, batch, &mut cols);
        let y: Vec<f64> = (0..cols.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut back = Vec::new();
        col2im(&y, &geom, batch, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn layouts_pick_the_same_patches() {
        let geom = ConvGeom {
            in_channels: 3,
            out_channels: 1,
            kernel: 2,
            stride: 1,
            in_size: 3,
        };
        let batch = 2;
        let sample_major: Vec<f32> = (0..batch * 27).map(|i| i as f32).collect();
        let mut channel_major = vec![0f32; sample_major.len()];
        for b in 0..batch {
            for c in 0..3 {
                for p in 0..9 {
                    channel_major[(c * batch + b) * 9 + p] = sample_major[(b * 3 + c) * 9 + p];
                }
            }
        }
        let (mut a, mut b) = (Vec::<f32>::new(), Vec::<f32>::new());
        im2col(&sample_major, Layout::SampleMajor, &geom, batch, &mut a);
        im2col(&channel_major, Layout::ChannelMajor, &geom, batch, &mut b);
        assert_eq!(a, b);
    }
}
