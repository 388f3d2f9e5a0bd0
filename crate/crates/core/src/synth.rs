//! Synthetic corpora and trigger patches.
//!
//! Two image styles: `Smooth` (sums of low-frequency sinusoids) and
//! `Shapes` (a smooth background plus 1..=5 filled rectangles and discs).
//! Corpus manifests list every image with `poisoned: false` and an empty
//! object list; shape annotations are still returned by [`gen_clean_image`]
//! for callers that want them.
//!
//! Reconstruction difficulty is engineered to vary between images: shapes
//! images keep their background in a narrow mid band that an autoencoder
//! masters quickly, while fill colors and shape sizes are drawn from wide
//! distributions, so a few images own most of the residual energy. A
//! detector that compares a query's worst slice against the pooled
//! validation slice errors needs exactly this heavy-tailed corpus: the
//! pooled spread is carried by image-to-image variation rather than by
//! equal hot spots inside every image.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::io::save_image;
use crate::manifest::{Manifest, ManifestEntry, ObjectAnnotation};
use crate::rng::SplitMix64;

/// Object class ids assigned by the shapes generator.
pub const CLASS_RECT: u32 = 0;
pub const CLASS_DISC: u32 = 1;

/// Smallest supported corpus image side.
pub const MIN_SIDE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageStyle {
    Smooth,
    Shapes,
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    /// Number of images to generate, at least 1.
    pub count: usize,
    /// Square image side in pixels, at least [`MIN_SIDE`].
    pub side: usize,
    pub style: ImageStyle,
    pub seed: u64,
}

/// Trigger patch families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PatchKind {
    /// Alternating cells of pure white and black. `cell` must divide the
    /// patch side.
    Checkerboard { cell: usize },
    /// Per-sample uniform noise.
    Noise,
    /// Constant color.
    Solid { rgb: [f32; 3] },
}

#[derive(Debug, Clone)]
pub struct PatchSpec {
    pub kind: PatchKind,
    /// Square patch side in pixels, at least 2.
    pub side: usize,
    /// Consumed by `Noise`; ignored by the deterministic kinds.
    pub seed: u64,
}

// Sinusoid field knobs. Frequencies are in cycles per image side, drawn
// log-uniform per image; every sinusoid of an image shares one magnitude.
// At side 64 the band keeps adjacent-pixel steps well under 0.2.
const FREQ_LO: f64 = 0.25;
const FREQ_HI: f64 = 1.6;
const SINUSOIDS_PER_CHANNEL: usize = 4;

// Shapes-style backgrounds are compressed into this band so foreground
// shapes dominate the residual energy.
const BG_LO: f32 = 0.3;
const BG_HI: f32 = 0.7;
const BG_FREQ_HI: f64 = 0.45;

// Satellite fills stay mid-range; anchor fills hug the value rails, the
// one region a briefly trained sigmoid decoder cannot reach.
const SATELLITE_COLOR_LO: f64 = 0.35;
const SATELLITE_COLOR_HI: f64 = 0.65;
const RAIL_WIDTH: f64 = 0.04;

/// Satellites keep their centers at least this fraction of the image side
/// apart (in 64ths), so no pooling window ever sees two of them.
const SATELLITE_SPACING_64THS: usize = 18;
const PLACEMENT_TRIES: usize = 16;

// Shape boundaries get a linear feather this many pixels wide. Soft edges
// keep boundary slices near the background error floor; hard anchors
// would otherwise leak edge energy into every mid-range image.
const EDGE_FEATHER: f64 = 2.0;

/// Every this-many-th corpus image carries the anchor slab, so every
/// validation split holds reference outliers at a fixed rate instead of a
/// binomial draw.
pub const ANCHOR_STRIDE: usize = 18;

/// One channel's sinusoid field: plane waves sharing one frequency
/// magnitude, random directions and phases, rescaled to span [0, 1].
fn smooth_channel(rng: &mut SplitMix64, side: usize, freq: f64) -> Vec<f32> {
    struct Wave {
        amp: f64,
        fx: f64,
        fy: f64,
        phase: f64,
    }
    let waves: Vec<Wave> = (0..SINUSOIDS_PER_CHANNEL)
        .map(|_| {
            let amp = rng.next_in(0.5, 1.0);
            let theta = rng.next_in(0.0, std::f64::consts::TAU);
            let phase = rng.next_in(0.0, std::f64::consts::TAU);
            Wave {
                amp,
                fx: freq * theta.cos(),
                fy: freq * theta.sin(),
                phase,
            }
        })
        .collect();

    let inv = 1.0 / side as f64;
    let mut field = vec![0.0f64; side * side];
    for wave in &waves {
        for y in 0..side {
            let fy_term = std::f64::consts::TAU * wave.fy * y as f64 * inv + wave.phase;
            let row = &mut field[y * side..(y + 1) * side];
            for (x, v) in row.iter_mut().enumerate() {
                let arg = std::f64::consts::TAU * wave.fx * x as f64 * inv + fy_term;
                *v += wave.amp * arg.sin();
            }
        }
    }

    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &field {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = hi - lo;
    if span < 1e-9 {
        return vec![0.5f32; side * side];
    }
    field
        .into_iter()
        .map(|v| (((v - lo) / span) as f32).clamp(0.0, 1.0))
        .collect()
}

/// Interleaves three channel planes, mapping plane values through
/// `lo + v * (hi - lo)`.
fn interleave(planes: &[Vec<f32>], side: usize, lo: f32, hi: f32) -> Vec<f32> {
    let mut data = vec![0.0f32; side * side * 3];
    for i in 0..side * side {
        for (c, plane) in planes.iter().enumerate() {
            data[i * 3 + c] = lo + plane[i] * (hi - lo);
        }
    }
    data
}

fn smooth_image(rng: &mut SplitMix64, side: usize, freq_hi: f64) -> Vec<Vec<f32>> {
    // One magnitude for the whole image; channels differ in directions,
    // phases, and amplitudes only.
    let freq = FREQ_LO * (freq_hi / FREQ_LO).powf(rng.next_f64());
    (0..3).map(|_| smooth_channel(rng, side, freq)).collect()
}

/// Blends `rgb` over the pixel at coverage `cov` in [0, 1].
fn blend_pixel(data: &mut [f32], side: usize, x: usize, y: usize, rgb: [f32; 3], cov: f64) {
    let i = (y * side + x) * 3;
    for (c, &v) in rgb.iter().enumerate() {
        let mixed = data[i + c] as f64 * (1.0 - cov) + v as f64 * cov;
        data[i + c] = mixed as f32;
    }
}

/// Coverage ramp over signed distance into the shape: 0 a feather outside
/// the boundary, 1 a feather inside, linear between.
fn feather_cov(dist_inside: f64) -> f64 {
    (dist_inside / EDGE_FEATHER + 0.5).clamp(0.0, 1.0)
}

fn draw_rect(data: &mut [f32], side: usize, x0: usize, y0: usize, w: usize, h: usize, rgb: [f32; 3]) {
    let pad = EDGE_FEATHER.ceil() as usize;
    let (ya, yb) = (y0.saturating_sub(pad), (y0 + h + pad).min(side));
    let (xa, xb) = (x0.saturating_sub(pad), (x0 + w + pad).min(side));
    for y in ya..yb {
        let dy = (y as f64 + 0.5 - y0 as f64).min(y0 as f64 + h as f64 - y as f64 - 0.5);
        for x in xa..xb {
            let dx = (x as f64 + 0.5 - x0 as f64).min(x0 as f64 + w as f64 - x as f64 - 0.5);
            let cov = feather_cov(dx.min(dy));
            if cov > 0.0 {
                blend_pixel(data, side, x, y, rgb, cov);
            }
        }
    }
}

fn draw_disc(data: &mut [f32], side: usize, cx: usize, cy: usize, r: usize, rgb: [f32; 3]) {
    let pad = r + EDGE_FEATHER.ceil() as usize;
    for y in cy.saturating_sub(pad)..=(cy + pad).min(side - 1) {
        for x in cx.saturating_sub(pad)..=(cx + pad).min(side - 1) {
            let dx = x as f64 - cx as f64;
            let dy = y as f64 - cy as f64;
            let cov = feather_cov(r as f64 - (dx * dx + dy * dy).sqrt());
            if cov > 0.0 {
                blend_pixel(data, side, x, y, rgb, cov);
            }
        }
    }
}

/// Generates one clean image plus its annotations. Deterministic in
/// `(seed, side, style)`. Smooth images carry no annotations. For shapes
/// images the low seed bit selects the anchor-slab class; [`gen_corpus`]
/// sets it on every [`ANCHOR_STRIDE`]-th image.
pub fn gen_clean_image(
    seed: u64,
    side: usize,
    style: ImageStyle,
) -> Result<(ImageTensor, Vec<ObjectAnnotation>)> {
    if side < MIN_SIDE {
        return Err(Error::InvalidParam {
            name: "side",
            detail: format!("{side} is below the minimum image side {MIN_SIDE}"),
        });
    }
    let mut rng = SplitMix64::new(seed);
    match style {
        ImageStyle::Smooth => {
            let planes = smooth_image(&mut rng, side, FREQ_HI);
            let data = interleave(&planes, side, 0.0, 1.0);
            let img = ImageTensor::new(side, side, 3, data)?;
            Ok((img, Vec::new()))
        }
        ImageStyle::Shapes => {
            let planes = smooth_image(&mut rng, side, BG_FREQ_HI);
            let mut data = interleave(&planes, side, BG_LO, BG_HI);
            // The low seed bit marks the anchor class (stratified by
            // gen_corpus): anchor images spend their five rectangles on a
            // rail-colored bar grating, everything else scatters small
            // mid-range satellites. The grating region is large and
            // uniformly hard, so its slice errors cluster at one level,
            // which the pooled reference needs (see the module docs).
            let objects = if seed & 1 == 1 {
                draw_grating(&mut rng, &mut data, side)
            } else {
                let count = 1 + rng.next_below(5) as usize;
                let spacing = (side * SATELLITE_SPACING_64THS / 64).max(5);
                let mut objects = Vec::with_capacity(count);
                let mut centers: Vec<(i64, i64)> = Vec::new();
                for _ in 0..count {
                    let is_disc = rng.next_below(2) == 1;
                    let mut rgb = [0.0f32; 3];
                    for v in rgb.iter_mut() {
                        *v = rng.next_in(SATELLITE_COLOR_LO, SATELLITE_COLOR_HI) as f32;
                    }
                    // Keep satellites a pooling window apart; a shape that
                    // finds no clear spot is dropped.
                    let clear = |centers: &[(i64, i64)], cx: i64, cy: i64| {
                        centers
                            .iter()
                            .all(|&(px, py)| (px - cx).abs().max((py - cy).abs()) >= spacing as i64)
                    };
                    if is_disc {
                        let r = log_uniform_int(&mut rng, 2, (side / 22).max(2));
                        for _ in 0..PLACEMENT_TRIES {
                            let cx = r + rng.next_below((side - 2 * r) as u64) as usize;
                            let cy = r + rng.next_below((side - 2 * r) as u64) as usize;
                            if !clear(&centers, cx as i64, cy as i64) {
                                continue;
                            }
                            centers.push((cx as i64, cy as i64));
                            draw_disc(&mut data, side, cx, cy, r, rgb);
                            objects.push(ObjectAnnotation {
                                class: CLASS_DISC,
                                bbox: [
                                    (cx - r) as u32,
                                    (cy - r) as u32,
                                    (2 * r + 1) as u32,
                                    (2 * r + 1) as u32,
                                ],
                            });
                            break;
                        }
                    } else {
                        let (mut w, mut h) = (0usize, 0usize);
                        for extent in [&mut w, &mut h] {
                            *extent = log_uniform_int(&mut rng, 3, (side / 13).max(4));
                        }
                        for _ in 0..PLACEMENT_TRIES {
                            let x0 = rng.next_below((side - w + 1) as u64) as usize;
                            let y0 = rng.next_below((side - h + 1) as u64) as usize;
                            let (cx, cy) = ((x0 + w / 2) as i64, (y0 + h / 2) as i64);
                            if !clear(&centers, cx, cy) {
                                continue;
                            }
                            centers.push((cx, cy));
                            draw_rect(&mut data, side, x0, y0, w, h, rgb);
                            objects.push(ObjectAnnotation {
                                class: CLASS_RECT,
                                bbox: [x0 as u32, y0 as u32, w as u32, h as u32],
                            });
                            break;
                        }
                    }
                }
                objects
            };
            let img = ImageTensor::new(side, side, 3, clamp_unit(data))?;
            Ok((img, objects))
        }
    }
}

/// Uniform integer in `[lo, hi]`.
fn uniform_int(rng: &mut SplitMix64, lo: usize, hi: usize) -> usize {
    lo + rng.next_below((hi - lo + 1) as u64) as usize
}

/// Hard-edged rectangle fill. Anchor bars skip the feather on purpose:
/// sharp rail transitions are what keeps them unlearnable.
fn fill_rect(data: &mut [f32], side: usize, x0: usize, y0: usize, w: usize, h: usize, rgb: [f32; 3]) {
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            data[(y * side + x) * 3..][..3].copy_from_slice(&rgb);
        }
    }
}

/// Anchor grating: five thin rail-colored bars, rail sides alternating.
/// Extreme values at a spatial period the briefly trained decoder cannot
/// repaint make these images the tail of the reference distribution.
fn draw_grating(rng: &mut SplitMix64, data: &mut [f32], side: usize) -> Vec<ObjectAnnotation> {
    let thick = (side * 5 / 64).max(1);
    let gap = (side / 32).max(1);
    let across = 5 * thick + 4 * gap;
    let len = uniform_int(rng, side * 3 / 4, side * 85 / 100);
    let vertical = rng.next_below(2) == 1;
    let start_hi = rng.next_below(2) == 1;
    let a0 = rng.next_below((side - across + 1) as u64) as usize;
    let b0 = rng.next_below((side - len + 1) as u64) as usize;
    let mut objects = Vec::with_capacity(5);
    for k in 0..5 {
        let hi_rail = start_hi ^ (k % 2 == 1);
        let mut rgb = [0.0f32; 3];
        for v in rgb.iter_mut() {
            let u = rng.next_f64() * RAIL_WIDTH;
            *v = if hi_rail { 1.0 - u } else { u } as f32;
        }
        let a = a0 + k * (thick + gap);
        let (x0, y0, w, h) = if vertical {
            (a, b0, thick, len)
        } else {
            (b0, a, len, thick)
        };
        fill_rect(data, side, x0, y0, w, h, rgb);
        objects.push(ObjectAnnotation {
            class: CLASS_RECT,
            bbox: [x0 as u32, y0 as u32, w as u32, h as u32],
        });
    }
    objects
}

/// Guards against f32 rounding pushing blended values a ulp outside [0, 1].
fn clamp_unit(mut data: Vec<f32>) -> Vec<f32> {
    for v in &mut data {
        *v = v.clamp(0.0, 1.0);
    }
    data
}

/// Log-uniform integer in `[lo, hi]`, biased toward small extents.
fn log_uniform_int(rng: &mut SplitMix64, lo: usize, hi: usize) -> usize {
    let v = lo as f64 * (hi as f64 / lo as f64).powf(rng.next_f64());
    (v + 0.5).floor() as usize
}

/// Generates `cfg.count` images into `out_dir` as `img_00000.png`, ... and
/// writes `manifest.jsonl` alongside them. Manifest entries carry empty
/// object lists and `poisoned: false`. Returns the manifest.
///
/// Each image gets its own child seed drawn sequentially from the master
/// stream, so the corpus is reproducible regardless of worker scheduling.
pub fn gen_corpus(cfg: &SynthConfig, out_dir: &Path) -> Result<Manifest> {
    if cfg.count == 0 {
        return Err(Error::InvalidParam {
            name: "count",
            detail: "a corpus needs at least one image".to_string(),
        });
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let mut master = SplitMix64::new(cfg.seed);
    // The low bit of each child seed stratifies the shapes anchor class at
    // one image in ANCHOR_STRIDE, so splits of any size carry the class at
    // a fixed rate rather than a binomial draw.
    let seeds: Vec<u64> = (0..cfg.count)
        .map(|i| (master.next_u64() << 1) | u64::from(i % ANCHOR_STRIDE == 0))
        .collect();

    let entries: Vec<ManifestEntry> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| -> Result<ManifestEntry> {
            let (img, _objects) = gen_clean_image(seed, cfg.side, cfg.style)?;
            let name = format!("img_{i:05}.png");
            save_image(&out_dir.join(&name), &img)?;
            Ok(ManifestEntry {
                image: name,
                objects: Vec::new(),
                poisoned: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = Manifest::from_parts(out_dir.to_path_buf(), entries);
    manifest.save(&out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}

/// Renders a trigger patch.
pub fn gen_patch(spec: &PatchSpec) -> Result<ImageTensor> {
    if spec.side < 2 {
        return Err(Error::InvalidParam {
            name: "patch side",
            detail: format!("{} is below the minimum patch side 2", spec.side),
        });
    }
    let side = spec.side;
    match &spec.kind {
        PatchKind::Checkerboard { cell } => {
            if *cell == 0 || side % cell != 0 {
                return Err(Error::InvalidParam {
                    name: "cell",
                    detail: format!("cell {cell} must divide patch side {side}"),
                });
            }
            let mut data = vec![0.0f32; side * side * 3];
            for y in 0..side {
                for x in 0..side {
                    if ((y / cell) + (x / cell)) % 2 == 0 {
                        let i = (y * side + x) * 3;
                        data[i..i + 3].copy_from_slice(&[1.0, 1.0, 1.0]);
                    }
                }
            }
            ImageTensor::new(side, side, 3, data)
        }
        PatchKind::Noise => {
            let mut rng = SplitMix64::new(spec.seed);
            let data: Vec<f32> = (0..side * side * 3).map(|_| rng.next_f64() as f32).collect();
            ImageTensor::new(side, side, 3, data)
        }
        PatchKind::Solid { rgb } => {
            for &v in rgb {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidParam {
                        name: "rgb",
                        detail: format!("component {v} is outside [0, 1]"),
                    });
                }
            }
            let mut data = Vec::with_capacity(side * side * 3);
            for _ in 0..side * side {
                data.extend_from_slice(rgb);
            }
            ImageTensor::new(side, side, 3, data)
        }
    }
}
