//! Convolutional autoencoder trained to reconstruct clean images.
//!
//! Fixed topology, parametric widths: three 3x3/stride-2 conv+ReLU encoder
//! stages, then three decoder stages of nearest-neighbor 2x upsampling
//! followed by a 3x3/stride-1 conv (ReLU between stages, sigmoid on the
//! last). Inputs are centered (x - 0.5) before the first conv; the
//! reconstruction target stays in raw [0,1] units. All gradients are exact
//! analytic derivatives; training uses Adam.
//!
//! Everything is generic over [`Real`] so the same code path runs in f32
//! for production and f64 for finite-difference gradient checking.

mod format;
mod layers;
mod real;
mod train;

pub use format::{load_model, save_model};
pub use real::Real;
pub use train::{batch_loss, train, train_on_planes, write_loss_csv, AdamState, TrainConfig};

use crate::error::{Error, Result};
use crate::image::{ErrorMap, ImageTensor};
use crate::rng::SplitMix64;

/// Network shape: square input side, input channels, encoder stage widths.
/// The decoder mirrors the widths in reverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchDescriptor {
    /// Input side in pixels; divisible by 8 so three stride-2 halvings stay
    /// integral, and at least 8 so the bottleneck is non-empty.
    pub side: usize,
    /// Input channels (1 or 3).
    pub channels: usize,
    /// Encoder output channels per stage.
    pub widths: [usize; 3],
}

impl ArchDescriptor {
    pub fn validate(&self) -> Result<()> {
        if self.side < 8 || self.side % 8 != 0 {
            return Err(Error::InvalidParam {
                name: "side",
                detail: format!("{} must be a multiple of 8, at least 8", self.side),
            });
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::ChannelMismatch {
                expected: 3,
                actual: self.channels,
            });
        }
        if self.widths.iter().any(|&w| w == 0 || w > 4096) {
            return Err(Error::InvalidParam {
                name: "widths",
                detail: format!("{:?} must be in 1..=4096", self.widths),
            });
        }
        Ok(())
    }

    /// Per-stage conv shapes in execution order: three encoder stages, then
    /// three decoder stages (whose inputs have already been upsampled).
    pub(crate) fn stages(&self) -> [Stage; 6] {
        let s = self.side;
        let c = self.channels;
        let [w0, w1, w2] = self.widths;
        [
            Stage { in_c: c, out_c: w0, in_side: s, stride: 2 },
            Stage { in_c: w0, out_c: w1, in_side: s / 2, stride: 2 },
            Stage { in_c: w1, out_c: w2, in_side: s / 4, stride: 2 },
            Stage { in_c: w2, out_c: w1, in_side: s / 4, stride: 1 },
            Stage { in_c: w1, out_c: w0, in_side: s / 2, stride: 1 },
            Stage { in_c: w0, out_c: c, in_side: s, stride: 1 },
        ]
    }

    /// Total trainable parameters.
    pub fn param_count(&self) -> usize {
        self.stages()
            .iter()
            .map(|st| st.out_c * st.in_c * 9 + st.out_c)
            .sum()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Stage {
    pub in_c: usize,
    pub out_c: usize,
    /// Side of the conv input (post-upsampling for decoder stages).
    pub in_side: usize,
    pub stride: usize,
}

impl Stage {
    pub fn out_side(&self) -> usize {
        self.in_side / self.stride
    }
}

/// One conv layer's parameters. Weights are laid out
/// `[out_c][in_c][ky][kx]`, biases `[out_c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub in_c: usize,
    pub out_c: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// The autoencoder: six conv layers plus training provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct AEModel<T: Real> {
    pub arch: ArchDescriptor,
    pub layers: Vec<ConvLayer<T>>,
    pub epochs_trained: u32,
    pub final_loss: f64,
}

/// Per-layer gradient buffers, same shapes as the layer parameters.
#[derive(Debug, Clone)]
pub struct LayerGrads<T> {
    pub dw: Vec<T>,
    pub db: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct Grads<T> {
    pub layers: Vec<LayerGrads<T>>,
}

impl<T: Real> Grads<T> {
    pub fn zeros_like(model: &AEModel<T>) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGrads {
                    dw: vec![T::ZERO; l.weights.len()],
                    db: vec![T::ZERO; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, &y) in a.dw.iter_mut().zip(&b.dw) {
                *x = *x + y;
            }
            for (x, &y) in a.db.iter_mut().zip(&b.db) {
                *x = *x + y;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for layer in &mut self.layers {
            for x in layer.dw.iter_mut().chain(layer.db.iter_mut()) {
                *x = *x * factor;
            }
        }
    }
}

/// Fresh model with uniform(+-sqrt(6 / fan_in)) weights and zero biases,
/// drawn layer by layer in layout order from a splitmix64 stream.
pub fn init_model<T: Real>(arch: &ArchDescriptor, seed: u64) -> Result<AEModel<T>> {
    arch.validate()?;
    let mut rng = SplitMix64::new(seed);
    let layers = arch
        .stages()
        .iter()
        .map(|st| {
            let fan_in = (st.in_c * 9) as f64;
            let bound = (6.0 / fan_in).sqrt();
            let weights = (0..st.out_c * st.in_c * 9)
                .map(|_| T::from_f64((2.0 * rng.next_f64() - 1.0) * bound))
                .collect();
            ConvLayer {
                in_c: st.in_c,
                out_c: st.out_c,
                weights,
                bias: vec![T::ZERO; st.out_c],
            }
        })
        .collect();
    Ok(AEModel {
        arch: *arch,
        layers,
        epochs_trained: 0,
        // Zero marks "never trained"; real MSE losses are strictly positive.
        final_loss: 0.0,
    })
}

/// Scratch buffers for one sample's forward/backward pass. Reused across
/// samples to keep the training loop allocation-free.
pub struct Workspace<T> {
    /// Centered copy of the input feeding the first conv.
    pub(crate) cin: Vec<T>,
    /// Post-activation outputs of each conv stage.
    pub(crate) acts: Vec<Vec<T>>,
    /// Upsampled inputs feeding each decoder conv (indices 3..6).
    pub(crate) ups: Vec<Vec<T>>,
    /// im2col patch matrix per conv stage.
    pub(crate) cols: Vec<Vec<T>>,
    /// Gradient scratch, sized like the largest activations.
    pub(crate) scratch_a: Vec<T>,
    pub(crate) scratch_b: Vec<T>,
}

impl<T: Real> Workspace<T> {
    pub fn new(arch: &ArchDescriptor) -> Self {
        let stages = arch.stages();
        let acts = stages
            .iter()
            .map(|st| vec![T::ZERO; st.out_c * st.out_side() * st.out_side()])
            .collect();
        let ups = stages[3..]
            .iter()
            .map(|st| vec![T::ZERO; st.in_c * st.in_side * st.in_side])
            .collect();
        let cols = stages
            .iter()
            .map(|st| vec![T::ZERO; st.in_c * 9 * st.out_side() * st.out_side()])
            .collect();
        let biggest = stages
            .iter()
            .map(|st| (st.in_c * st.in_side * st.in_side).max(st.out_c * st.out_side() * st.out_side()))
            .max()
            .unwrap();
        Self {
            cin: vec![T::ZERO; arch.channels * arch.side * arch.side],
            acts,
            ups,
            cols,
            scratch_a: vec![T::ZERO; biggest],
            scratch_b: vec![T::ZERO; biggest],
        }
    }
}

impl<T: Real> AEModel<T> {
    /// Runs the network on one planar sample (`[c][y][x]`, side matching the
    /// architecture). The reconstruction lands in `ws.acts[5]`.
    pub(crate) fn forward_into(&self, input: &[T], ws: &mut Workspace<T>) {
        debug_assert_eq!(input.len(), self.arch.channels * self.arch.side * self.arch.side);
        // The encoder consumes zero-centered values; with zero initial
        // biases, raw [0,1] inputs would push every first-stage ReLU the
        // same direction and some init draws never recover. The
        // reconstruction target stays in raw units.
        let half = T::from_f64(0.5);
        for (c, &x) in ws.cin.iter_mut().zip(input) {
            *c = x - half;
        }
        let stages = self.arch.stages();
        for li in 0..6 {
            let st = stages[li];
            let activation = if li == 5 {
                layers::Activation::Sigmoid
            } else {
                layers::Activation::Relu
            };
            // Encoder stages read the previous activation directly; decoder
            // stages read it through a 2x nearest-neighbor upsample.
            if li >= 3 {
                let (src, src_side) = if li == 3 {
                    (&ws.acts[2], self.arch.side / 8)
                } else {
                    (&ws.acts[li - 1], stages[li - 1].out_side())
                };
                let up_buf = &mut ws.ups[li - 3];
                layers::upsample2(src, st.in_c, src_side, up_buf);
                let (cols, acts) = (&mut ws.cols[li], &mut ws.acts[li]);
                layers::conv_forward(&self.layers[li], st, up_buf, cols, acts, activation);
            } else {
                // Split borrows: acts[li] and acts[li-1] never alias.
                let (done, rest) = ws.acts.split_at_mut(li);
                let src: &[T] = if li == 0 { &ws.cin } else { &done[li - 1] };
                layers::conv_forward(&self.layers[li], st, src, &mut ws.cols[li], &mut rest[0], activation);
            }
        }
    }

    /// Reconstruction of a planar sample.
    pub fn reconstruct_planes(&self, input: &[T], ws: &mut Workspace<T>) -> Vec<T> {
        self.forward_into(input, ws);
        ws.acts[5].clone()
    }

    /// Per-pixel reconstruction error: squared error averaged over channels.
    pub fn error_map(&self, img: &ImageTensor) -> Result<ErrorMap> {
        let side = self.arch.side;
        if img.height() != side || img.width() != side {
            return Err(Error::InvalidDimensions {
                detail: format!(
                    "image is {}x{}, model expects {side}x{side}; resize first",
                    img.height(),
                    img.width()
                ),
            });
        }
        if img.channels() != self.arch.channels {
            return Err(Error::ChannelMismatch {
                expected: self.arch.channels,
                actual: img.channels(),
            });
        }
        let planes: Vec<T> = img.to_planes().iter().map(|&v| T::from_f64(v as f64)).collect();
        let mut ws = Workspace::new(&self.arch);
        self.forward_into(&planes, &mut ws);
        let recon = &ws.acts[5];
        let hw = side * side;
        let c = self.arch.channels;
        let mut data = vec![0.0f32; hw];
        for i in 0..hw {
            let mut acc = 0.0f64;
            for ch in 0..c {
                let d = recon[ch * hw + i].to_f64() - planes[ch * hw + i].to_f64();
                acc += d * d;
            }
            data[i] = (acc / c as f64) as f32;
        }
        ErrorMap::new(side, side, data)
    }
}

/// Mean squared error and parameter gradients over a batch of planar
/// samples. The loss is averaged over `batch * channels * side * side`
/// components; gradients share that scaling.
///
/// Samples are processed independently and reduced in index order, so the
/// result does not depend on how work is scheduled.
pub fn loss_and_grads<T: Real>(model: &AEModel<T>, batch: &[&[T]]) -> Result<(f64, Grads<T>)> {
    let mut ws = Workspace::new(&model.arch);
    train::batch_step(model, batch, &mut ws)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_arch() -> ArchDescriptor {
        ArchDescriptor {
            side: 8,
            channels: 3,
            widths: [2, 2, 2],
        }
    }

    #[test]
    fn arch_validation_enforces_divisibility_and_widths() {
        assert!(tiny_arch().validate().is_ok());
        let bad_side = ArchDescriptor { side: 20, ..tiny_arch() };
        assert!(bad_side.validate().is_err());
        let small = ArchDescriptor { side: 4, ..tiny_arch() };
        assert!(small.validate().is_err());
        let zero_width = ArchDescriptor { widths: [0, 2, 2], ..tiny_arch() };
        assert!(zero_width.validate().is_err());
        let two_ch = ArchDescriptor { channels: 2, ..tiny_arch() };
        assert!(two_ch.validate().is_err());
        // The paper-scale side is not a power of two but is a multiple of 8.
        let paper = ArchDescriptor { side: 320, channels: 3, widths: [16, 32, 64] };
        assert!(paper.validate().is_ok());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let arch = tiny_arch();
        let a: AEModel<f32> = init_model(&arch, 5).unwrap();
        let b: AEModel<f32> = init_model(&arch, 5).unwrap();
        let c: AEModel<f32> = init_model(&arch, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for (layer, st) in a.layers.iter().zip(arch.stages()) {
            let bound = (6.0 / (st.in_c * 9) as f64).sqrt() as f32;
            assert!(layer.weights.iter().all(|w| w.abs() <= bound));
            assert!(layer.bias.iter().all(|&b| b == 0.0));
            assert_eq!(layer.weights.len(), st.out_c * st.in_c * 9);
        }
    }

    #[test]
    fn forward_output_shape_and_sigmoid_range() {
        let arch = tiny_arch();
        let model: AEModel<f32> = init_model(&arch, 1).unwrap();
        let mut ws = Workspace::new(&arch);
        let input = vec![0.3f32; arch.channels * 64];
        let out = model.reconstruct_planes(&input, &mut ws);
        assert_eq!(out.len(), arch.channels * 64);
        assert!(out.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    /// Nested-loop conv with explicit padding, no im2col/GEMM. Guards the
    /// packed fast path.
    fn naive_stage(layer: &ConvLayer<f64>, st: &Stage, input: &[f64], sigmoid: bool) -> Vec<f64> {
        let o = st.out_side();
        let mut out = vec![0.0; st.out_c * o * o];
        for oc in 0..st.out_c {
            for oy in 0..o {
                for ox in 0..o {
                    let mut acc = layer.bias[oc];
                    for ic in 0..st.in_c {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * st.stride + ky) as isize - 1;
                                let ix = (ox * st.stride + kx) as isize - 1;
                                let side = st.in_side as isize;
                                if iy < 0 || iy >= side || ix < 0 || ix >= side {
                                    continue;
                                }
                                let w = layer.weights[(oc * st.in_c + ic) * 9 + ky * 3 + kx];
                                let x = input[(ic * st.in_side + iy as usize) * st.in_side + ix as usize];
                                acc += w * x;
                            }
                        }
                    }
                    out[(oc * o + oy) * o + ox] = if sigmoid {
                        1.0 / (1.0 + (-acc).exp())
                    } else {
                        acc.max(0.0)
                    };
                }
            }
        }
        out
    }

    fn naive_upsample(src: &[f64], channels: usize, side: usize) -> Vec<f64> {
        let d = side * 2;
        let mut dst = vec![0.0; channels * d * d];
        for c in 0..channels {
            for y in 0..d {
                for x in 0..d {
                    dst[(c * d + y) * d + x] = src[(c * side + y / 2) * side + x / 2];
                }
            }
        }
        dst
    }

    #[test]
    fn forward_matches_straight_line_oracle() {
        let arch = tiny_arch();
        let model: AEModel<f64> = init_model(&arch, 42).unwrap();
        let mut rng = SplitMix64::new(9);
        let input: Vec<f64> = (0..arch.channels * 64).map(|_| rng.next_f64()).collect();

        let mut ws = Workspace::new(&arch);
        let fast = model.reconstruct_planes(&input, &mut ws);

        let stages = arch.stages();
        let mut cur: Vec<f64> = input.iter().map(|v| v - 0.5).collect();
        for li in 0..6 {
            if li >= 3 {
                let src_side = stages[li].in_side / 2;
                cur = naive_upsample(&cur, stages[li].in_c, src_side);
            }
            cur = naive_stage(&model.layers[li], &stages[li], &cur, li == 5);
        }
        let max_diff = fast
            .iter()
            .zip(&cur)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff < 1e-12, "max diff {max_diff}");
    }

    #[test]
    fn error_map_is_zero_for_perfect_reconstruction_only() {
        let arch = tiny_arch();
        let model: AEModel<f32> = init_model(&arch, 2).unwrap();
        // Constant 0.5 is a fixed point of a fresh model: centering zeroes
        // the encoder input, biases start at zero, and sigmoid(0) = 0.5.
        let half = ImageTensor::new(8, 8, 3, vec![0.5; 192]).unwrap();
        let map = model.error_map(&half).unwrap();
        assert!(map.data().iter().all(|&v| v == 0.0));
        // Any other constant level defeats a fresh random model.
        let img = ImageTensor::new(8, 8, 3, vec![0.3; 192]).unwrap();
        let map = model.error_map(&img).unwrap();
        assert_eq!(map.height(), 8);
        assert_eq!(map.width(), 8);
        assert!(map.data().iter().any(|&v| v > 0.0));
    }

    #[test]
    fn error_map_rejects_mismatched_inputs() {
        let model: AEModel<f32> = init_model(&tiny_arch(), 3).unwrap();
        let wrong_size = ImageTensor::zeros(16, 16, 3).unwrap();
        assert!(model.error_map(&wrong_size).is_err());
        let wrong_channels = ImageTensor::zeros(8, 8, 1).unwrap();
        assert!(model.error_map(&wrong_channels).is_err());
    }

    #[test]
    fn error_map_mean_equals_singleton_batch_loss() {
        // Cross-operation consistency: both reduce the same squared
        // residuals, error_map per pixel (channel means) and batch_loss
        // over the whole sample.
        let arch = tiny_arch();
        let model: AEModel<f32> = init_model(&arch, 8).unwrap();
        let mut rng = SplitMix64::new(21);
        let data: Vec<f32> = (0..192).map(|_| rng.next_f64() as f32).collect();
        let img = ImageTensor::new(8, 8, 3, data).unwrap();

        let map = model.error_map(&img).unwrap();
        let map_mean: f64 =
            map.data().iter().map(|&v| v as f64).sum::<f64>() / map.data().len() as f64;

        let planes = img.to_planes();
        let loss = crate::autoenc::batch_loss(&model, &[planes.as_slice()]).unwrap();
        assert!((map_mean - loss).abs() < 1e-6, "{map_mean} vs {loss}");
    }

    #[test]
    fn param_count_matches_layer_buffers() {
        let arch = tiny_arch();
        let model: AEModel<f64> = init_model(&arch, 0).unwrap();
        let total: usize = model
            .layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum();
        assert_eq!(total, arch.param_count());
    }
}
