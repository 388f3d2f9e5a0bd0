//! Training loop: full-model backward pass, Adam with bias correction,
//! seeded epoch shuffling.

use rayon::prelude::*;

use super::layers::{self, Activation};
use super::{AEModel, ArchDescriptor, Grads, Real, Workspace};
use crate::error::{Error, Result};
use crate::image::resize_bilinear;
use crate::io::load_image;
use crate::manifest::Manifest;
use crate::rng::SplitMix64;

/// The defaults are the desk-scale recipe: Adam at learning rate 1e-4 with
/// batch 64, shortened to 50 epochs.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub epochs: u32,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch: 64,
            lr: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::InvalidParam {
                name: "batch",
                detail: "must be at least 1".to_string(),
            });
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidParam {
                name: "lr",
                detail: format!("{} must be positive and finite", self.lr),
            });
        }
        Ok(())
    }
}

/// Reconstruction loss and per-sample gradient contribution for one planar
/// sample. Returned gradients are unscaled sums (residual `2 * (r - x)`);
/// the caller divides by the batch element count.
pub(crate) fn backward_one<T: Real>(
    model: &AEModel<T>,
    input: &[T],
    ws: &mut Workspace<T>,
) -> (f64, Grads<T>) {
    model.forward_into(input, ws);
    let stages = model.arch.stages();
    let n_out = model.arch.channels * model.arch.side * model.arch.side;

    let mut sq_sum = 0.0f64;
    {
        let recon = &ws.acts[5];
        let d_out = &mut ws.scratch_a[..n_out];
        for i in 0..n_out {
            let r = recon[i];
            let x = input[i];
            let diff = r.to_f64() - x.to_f64();
            sq_sum += diff * diff;
            d_out[i] = (r - x) + (r - x);
        }
    }

    let mut grads = Grads::zeros_like(model);
    let Workspace {
        cin: _,
        acts,
        ups: _,
        cols,
        scratch_a,
        scratch_b,
    } = ws;
    // scratch_a holds the gradient flowing into the current stage's output;
    // scratch_b receives the gradient w.r.t. that stage's input.
    let mut d_out_buf = scratch_a;
    let mut d_in_buf = scratch_b;

    for li in (0..6).rev() {
        let st = stages[li];
        let p = st.out_side() * st.out_side();
        let in_len = st.in_c * st.in_side * st.in_side;
        let activation = if li == 5 { Activation::Sigmoid } else { Activation::Relu };
        let d_input = if li > 0 {
            Some(&mut d_in_buf[..in_len])
        } else {
            None
        };
        layers::conv_backward(
            &model.layers[li],
            st,
            &mut cols[li],
            &acts[li],
            &mut d_out_buf[..st.out_c * p],
            &mut grads.layers[li],
            d_input,
            activation,
        );
        if li == 0 {
            break;
        }
        if li >= 3 {
            // The conv consumed an upsampled activation; fold the gradient
            // back down onto the pre-upsample map.
            let src_side = st.in_side / 2;
            let (d_up, d_src) = (&d_in_buf[..in_len], &mut d_out_buf[..st.in_c * src_side * src_side]);
            layers::upsample2_backward(d_up, st.in_c, src_side, d_src);
        } else {
            std::mem::swap(&mut d_out_buf, &mut d_in_buf);
        }
    }
    (sq_sum, grads)
}

/// Forward-only mean loss over a batch of planar samples (used by the
/// finite-difference gradient checks and for validation curves).
pub fn batch_loss<T: Real>(model: &AEModel<T>, batch: &[&[T]]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyInput { what: "batch" });
    }
    let mut ws = Workspace::new(&model.arch);
    let mut sq = 0.0f64;
    for sample in batch {
        model.forward_into(sample, &mut ws);
        let recon = &ws.acts[5];
        for (r, x) in recon.iter().zip(sample.iter()) {
            let d = r.to_f64() - x.to_f64();
            sq += d * d;
        }
    }
    let elems = (batch.len() * model.arch.channels * model.arch.side * model.arch.side) as f64;
    Ok(sq / elems)
}

/// Adam optimizer state (first and second moment estimates per parameter).
pub struct AdamState<T: Real> {
    step: u64,
    m: Grads<T>,
    v: Grads<T>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl<T: Real> AdamState<T> {
    pub fn new(model: &AEModel<T>) -> Self {
        Self {
            step: 0,
            m: Grads::zeros_like(model),
            v: Grads::zeros_like(model),
        }
    }

    /// One Adam update with bias correction:
    /// `w -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn apply(&mut self, model: &mut AEModel<T>, grads: &Grads<T>, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let inv_bc1 = T::from_f64(1.0 / (1.0 - BETA1.powi(t)));
        let inv_bc2 = T::from_f64(1.0 / (1.0 - BETA2.powi(t)));
        let b1 = T::from_f64(BETA1);
        let nb1 = T::from_f64(1.0 - BETA1);
        let b2 = T::from_f64(BETA2);
        let nb2 = T::from_f64(1.0 - BETA2);
        let eps = T::from_f64(EPS);
        let lr = T::from_f64(lr);

        for (li, layer) in model.layers.iter_mut().enumerate() {
            let (gm, gv, g) = (&mut self.m.layers[li], &mut self.v.layers[li], &grads.layers[li]);
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let ms = gm.dw.iter_mut().chain(gm.db.iter_mut());
            let vs = gv.dw.iter_mut().chain(gv.db.iter_mut());
            let gs = g.dw.iter().chain(g.db.iter());
            for (((w, m), v), &grad) in params.zip(ms).zip(vs).zip(gs) {
                *m = b1 * *m + nb1 * grad;
                *v = b2 * *v + nb2 * grad * grad;
                let m_hat = *m * inv_bc1;
                let v_hat = *v * inv_bc2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Mean loss and mean-scaled gradients over a batch. Samples are reduced in
/// index order whatever the thread count, so results are scheduling-proof.
pub(crate) fn batch_step<T: Real>(
    model: &AEModel<T>,
    batch: &[&[T]],
    ws: &mut Workspace<T>,
) -> Result<(f64, Grads<T>)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput { what: "batch" });
    }
    let per_sample: Vec<(f64, Grads<T>)> = if rayon::current_num_threads() > 1 && batch.len() > 1 {
        batch
            .par_iter()
            .map_init(
                || Workspace::new(&model.arch),
                |ws, sample| backward_one(model, sample, ws),
            )
            .collect()
    } else {
        batch.iter().map(|s| backward_one(model, s, ws)).collect()
    };

    let elems = (batch.len() * model.arch.channels * model.arch.side * model.arch.side) as f64;
    let mut sq_sum = 0.0f64;
    let mut grads = Grads::zeros_like(model);
    for (sq, g) in &per_sample {
        sq_sum += sq;
        grads.add_assign(g);
    }
    grads.scale(T::from_f64(1.0 / elems));
    Ok((sq_sum / elems, grads))
}

/// Trains on pre-loaded planar samples. Returns the model and the mean loss
/// of each epoch (computed from the pre-update forward passes).
///
/// Seeding: a master stream over `cfg.seed` yields the init seed and the
/// shuffle seed, so `epochs == 0` returns exactly the freshly initialized
/// model and the shuffle order never aliases the weight draws.
pub fn train_on_planes<T: Real>(
    samples: &[Vec<T>],
    arch: &ArchDescriptor,
    cfg: &TrainConfig,
) -> Result<(AEModel<T>, Vec<f64>)> {
    arch.validate()?;
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyInput { what: "training corpus" });
    }
    let plane_len = arch.channels * arch.side * arch.side;
    if let Some(bad) = samples.iter().position(|s| s.len() != plane_len) {
        return Err(Error::InvalidDimensions {
            detail: format!("sample {bad} has {} values, expected {plane_len}", samples[bad].len()),
        });
    }

    let mut seeder = SplitMix64::new(cfg.seed);
    let init_seed = seeder.next_u64();
    let shuffle_seed = seeder.next_u64();
    let mut model = super::init_model::<T>(arch, init_seed)?;
    let mut shuffle_rng = SplitMix64::new(shuffle_seed);
    let mut adam = AdamState::new(&model);
    let mut ws = Workspace::new(arch);

    let mut losses = Vec::with_capacity(cfg.epochs as usize);
    let mut indices: Vec<usize> = (0..samples.len()).collect();
    for _ in 0..cfg.epochs {
        shuffle_rng.shuffle(&mut indices);
        let mut sq_weighted = 0.0f64;
        for chunk in indices.chunks(cfg.batch) {
            let batch: Vec<&[T]> = chunk.iter().map(|&i| samples[i].as_slice()).collect();
            let (loss, grads) = batch_step(&model, &batch, &mut ws)?;
            adam.apply(&mut model, &grads, cfg.lr);
            sq_weighted += loss * (chunk.len() * plane_len) as f64;
        }
        losses.push(sq_weighted / (samples.len() * plane_len) as f64);
    }

    model.epochs_trained = cfg.epochs;
    model.final_loss = losses.last().copied().unwrap_or(0.0);
    Ok((model, losses))
}

/// Trains from a manifest: loads every image, resizes to the architecture
/// side when needed, and runs [`train_on_planes`] in f32.
pub fn train(
    manifest: &Manifest,
    arch: &ArchDescriptor,
    cfg: &TrainConfig,
) -> Result<(AEModel<f32>, Vec<f64>)> {
    let samples = load_planes::<f32>(manifest, arch)?;
    train_on_planes(&samples, arch, cfg)
}

/// Training log CSV: `epoch,mean_loss`, epochs numbered from 1.
pub fn write_loss_csv(losses: &[f64], path: &std::path::Path) -> Result<()> {
    let mut text = String::from("epoch,mean_loss\n");
    for (i, loss) in losses.iter().enumerate() {
        text.push_str(&format!("{},{}\n", i + 1, loss));
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub(crate) fn load_planes<T: Real>(manifest: &Manifest, arch: &ArchDescriptor) -> Result<Vec<Vec<T>>> {
    arch.validate()?;
    if manifest.is_empty() {
        return Err(Error::EmptyInput { what: "training corpus" });
    }
    manifest
        .entries
        .par_iter()
        .map(|entry| -> Result<Vec<T>> {
            let img = load_image(&manifest.image_path(entry))?;
            if img.channels() != arch.channels {
                return Err(Error::ChannelMismatch {
                    expected: arch.channels,
                    actual: img.channels(),
                });
            }
            let img = if img.height() != arch.side || img.width() != arch.side {
                resize_bilinear(&img, arch.side, arch.side)?
            } else {
                img
            };
            Ok(img.to_planes().iter().map(|&v| T::from_f64(v as f64)).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoenc::init_model;

    fn tiny_arch() -> ArchDescriptor {
        ArchDescriptor {
            side: 8,
            channels: 3,
            widths: [2, 2, 2],
        }
    }

    fn random_samples(arch: &ArchDescriptor, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = SplitMix64::new(seed);
        (0..n)
            .map(|_| {
                (0..arch.channels * arch.side * arch.side)
                    .map(|_| rng.next_f64())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn full_model_gradients_match_central_differences() {
        let arch = tiny_arch();
        let model: AEModel<f64> = init_model(&arch, 77).unwrap();
        let samples = random_samples(&arch, 2, 3);
        let batch: Vec<&[f64]> = samples.iter().map(|s| s.as_slice()).collect();
        let mut ws = Workspace::new(&arch);
        let (_, grads) = batch_step(&model, &batch, &mut ws).unwrap();

        let h = 1e-5;
        let mut rng = SplitMix64::new(5);
        let mut checked = 0usize;
        while checked < 60 {
            let li = rng.next_below(6) as usize;
            let layer = &model.layers[li];
            let n_w = layer.weights.len();
            let idx = rng.next_below((n_w + layer.bias.len()) as u64) as usize;
            let analytic;
            let mut plus = model.clone();
            let mut minus = model.clone();
            if idx < n_w {
                analytic = grads.layers[li].dw[idx];
                plus.layers[li].weights[idx] += h;
                minus.layers[li].weights[idx] -= h;
            } else {
                analytic = grads.layers[li].db[idx - n_w];
                plus.layers[li].bias[idx - n_w] += h;
                minus.layers[li].bias[idx - n_w] -= h;
            }
            let fd = (batch_loss(&plus, &batch).unwrap() - batch_loss(&minus, &batch).unwrap())
                / (2.0 * h);
            if analytic.abs() < 1e-10 && fd.abs() < 1e-10 {
                checked += 1;
                continue;
            }
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs());
            assert!(rel < 1e-4, "layer {li} idx {idx}: {analytic} vs {fd} (rel {rel})");
            checked += 1;
        }
    }

    #[test]
    fn adam_first_step_moves_by_about_lr() {
        // With bias correction, step 1 gives m_hat = g and v_hat = g^2, so
        // the update is lr * g / (|g| + eps): about lr in magnitude.
        let arch = tiny_arch();
        let mut model: AEModel<f64> = init_model(&arch, 1).unwrap();
        let before = model.layers[0].weights[0];
        let mut grads = Grads::zeros_like(&model);
        grads.layers[0].dw[0] = 0.25;
        let mut adam = AdamState::new(&model);
        adam.apply(&mut model, &grads, 1e-3);
        let moved = before - model.layers[0].weights[0];
        assert!((moved - 1e-3).abs() < 1e-9, "moved {moved}");
        // Untouched parameters stay put.
        let fresh: AEModel<f64> = init_model(&arch, 1).unwrap();
        assert_eq!(model.layers[0].weights[1], fresh.layers[0].weights[1]);
    }

    #[test]
    fn zero_epochs_returns_the_initialized_model() {
        let arch = tiny_arch();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let samples: Vec<Vec<f32>> = random_samples(&arch, 3, 9)
            .into_iter()
            .map(|s| s.into_iter().map(|v| v as f32).collect())
            .collect();
        let (model, losses) = train_on_planes(&samples, &arch, &cfg).unwrap();
        assert!(losses.is_empty());
        let init_seed = SplitMix64::new(cfg.seed).next_u64();
        let fresh: AEModel<f32> = init_model(&arch, init_seed).unwrap();
        assert_eq!(model.layers, fresh.layers);
        assert_eq!(model.epochs_trained, 0);
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        // Constant-channel images: the output bias alone can represent them,
        // so even the tiny two-channel bottleneck must fit this corpus.
        let arch = tiny_arch();
        let plane = arch.side * arch.side;
        let samples: Vec<Vec<f32>> = (0..6)
            .map(|i| {
                let levels = [
                    0.2 + 0.05 * i as f32,
                    0.5,
                    0.8 - 0.05 * i as f32,
                ];
                levels
                    .iter()
                    .flat_map(|&v| std::iter::repeat(v).take(plane))
                    .collect()
            })
            .collect();
        let cfg = TrainConfig {
            epochs: 40,
            batch: 3,
            lr: 3e-3,
            seed: 11,
        };
        let (model_a, losses_a) = train_on_planes(&samples, &arch, &cfg).unwrap();
        let (model_b, losses_b) = train_on_planes(&samples, &arch, &cfg).unwrap();
        assert_eq!(model_a.layers, model_b.layers);
        assert_eq!(losses_a, losses_b);
        assert_eq!(losses_a.len(), 40);
        assert!(
            losses_a.last().unwrap() < &(losses_a[0] * 0.8),
            "loss did not drop: {losses_a:?}"
        );
        assert_eq!(model_a.epochs_trained, 40);
        assert!((model_a.final_loss - losses_a.last().unwrap()).abs() < 1e-15);
    }

    #[test]
    fn step_count_is_epochs_times_batches() {
        // 7 samples, batch 3 gives ceil(7/3) = 3 batches per epoch; the
        // epoch loss must weight the odd-sized tail batch correctly.
        let arch = tiny_arch();
        let samples: Vec<Vec<f32>> = random_samples(&arch, 7, 2)
            .into_iter()
            .map(|s| s.into_iter().map(|v| v as f32).collect())
            .collect();
        let cfg = TrainConfig {
            epochs: 2,
            batch: 3,
            lr: 1e-3,
            seed: 0,
        };
        let (_, losses) = train_on_planes(&samples, &arch, &cfg).unwrap();
        assert_eq!(losses.len(), 2);
        assert!(losses.iter().all(|l| l.is_finite() && *l > 0.0));
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let arch = tiny_arch();
        let cfg = TrainConfig::default();
        let empty: Vec<Vec<f32>> = vec![];
        assert!(train_on_planes(&empty, &arch, &cfg).is_err());

        let wrong_len = vec![vec![0.5f32; 10]];
        assert!(train_on_planes(&wrong_len, &arch, &cfg).is_err());

        let bad_batch = TrainConfig { batch: 0, ..cfg };
        let ok = vec![vec![0.5f32; 192]];
        assert!(train_on_planes(&ok, &arch, &bad_batch).is_err());

        let bad_lr = TrainConfig { lr: 0.0, ..cfg };
        assert!(train_on_planes(&ok, &arch, &bad_lr).is_err());
    }
}
