//! Reconstruction-error based poisoning detection.
//!
//! A trained autoencoder turns an image into a per-pixel error map. Every
//! stride-1 square slice of that map is pooled to one number, the image's
//! score is the worst slice, and a Gaussian reference fitted to validation
//! slice errors converts the score into a CDF value. Verdict: cdf >= t.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoenc::AEModel;
use crate::error::{Error, Result};
use crate::image::{resize_bilinear, ErrorMap, ImageTensor};
use crate::io::load_image;
use crate::manifest::Manifest;
use crate::normal::normal_cdf;

/// How a slice's pixel errors are pooled into its slice error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Aggregator {
    Mean,
    Max,
    /// Nearest-rank percentile, `p` strictly inside (0, 1).
    Percentile(f64),
}

impl Aggregator {
    fn validate(&self) -> Result<()> {
        if let Aggregator::Percentile(p) = self {
            if !(*p > 0.0 && *p < 1.0) {
                return Err(Error::InvalidParam {
                    name: "percentile",
                    detail: format!("{p} must be strictly inside (0, 1)"),
                });
            }
        }
        Ok(())
    }

    /// Stable text form used in the reference JSON.
    pub fn label(&self) -> String {
        match self {
            Aggregator::Mean => "mean".to_string(),
            Aggregator::Max => "max".to_string(),
            Aggregator::Percentile(p) => format!("percentile:{p}"),
        }
    }
}

impl FromStr for Aggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregator::Mean),
            "max" => Ok(Aggregator::Max),
            other => {
                if let Some(p) = other.strip_prefix("percentile:") {
                    let p: f64 = p.parse().map_err(|_| Error::InvalidParam {
                        name: "aggregator",
                        detail: format!("bad percentile in {other:?}"),
                    })?;
                    let agg = Aggregator::Percentile(p);
                    agg.validate()?;
                    Ok(agg)
                } else {
                    Err(Error::InvalidParam {
                        name: "aggregator",
                        detail: format!("{other:?} is not mean, max, or percentile:<p>"),
                    })
                }
            }
        }
    }
}

impl Serialize for Aggregator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for Aggregator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceConfig {
    /// Square slice side in pixels.
    pub slice: usize,
    pub aggregator: Aggregator,
}

impl Default for SliceConfig {
    fn default() -> Self {
        Self {
            slice: 13,
            aggregator: Aggregator::Mean,
        }
    }
}

/// Pooled error of every stride-1 slice: dimensions
/// `(H - s + 1) x (W - s + 1)` over an `H x W` error map.
#[derive(Debug, Clone)]
pub struct SliceErrorMap {
    height: usize,
    width: usize,
    slice: usize,
    data: Vec<f64>,
}

impl SliceErrorMap {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn slice(&self) -> usize {
        self.slice
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// The image score: worst pooled slice.
    pub fn max_value(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Sliding-window maximum over a vector, window `s`, via a monotonic deque.
fn sliding_max(src: &[f64], s: usize, out: &mut Vec<f64>) {
    out.clear();
    let mut deque: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    for (i, &v) in src.iter().enumerate() {
        while let Some(&back) = deque.back() {
            if src[back] <= v {
                deque.pop_back();
            } else {
                break;
            }
        }
        deque.push_back(i);
        if let Some(&front) = deque.front() {
            if front + s == i {
                deque.pop_front();
            }
        }
        if i + 1 >= s {
            out.push(src[*deque.front().unwrap()]);
        }
    }
}

/// Pools every stride-1 `s x s` slice of the error map.
///
/// Mean pooling runs on an integral image, max pooling on two separable
/// sliding-max passes, percentile on per-window selection; all in f64.
pub fn slice_errors(map: &ErrorMap, cfg: &SliceConfig) -> Result<SliceErrorMap> {
    cfg.aggregator.validate()?;
    let (h, w, s) = (map.height(), map.width(), cfg.slice);
    if s == 0 || s > h || s > w {
        return Err(Error::InvalidParam {
            name: "slice",
            detail: format!("slice {s} does not fit a {h}x{w} error map"),
        });
    }
    let (oh, ow) = (h - s + 1, w - s + 1);
    let mut data = vec![0.0f64; oh * ow];

    match cfg.aggregator {
        Aggregator::Mean => {
            // Integral image with a zero top row and left column.
            let mut sat = vec![0.0f64; (h + 1) * (w + 1)];
            for y in 0..h {
                let mut row_sum = 0.0f64;
                for x in 0..w {
                    row_sum += map.get(y, x) as f64;
                    sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row_sum;
                }
            }
            let inv = 1.0 / (s * s) as f64;
            for oy in 0..oh {
                for ox in 0..ow {
                    let a = sat[oy * (w + 1) + ox];
                    let b = sat[oy * (w + 1) + ox + s];
                    let c = sat[(oy + s) * (w + 1) + ox];
                    let d = sat[(oy + s) * (w + 1) + ox + s];
                    data[oy * ow + ox] = (d - b - c + a) * inv;
                }
            }
        }
        Aggregator::Max => {
            // Row pass: horizontal sliding max, h x ow.
            let mut rows = vec![0.0f64; h * ow];
            let mut src = vec![0.0f64; w.max(h)];
            let mut out = Vec::with_capacity(w.max(h));
            for y in 0..h {
                src.truncate(0);
                src.extend((0..w).map(|x| map.get(y, x) as f64));
                sliding_max(&src, s, &mut out);
                rows[y * ow..(y + 1) * ow].copy_from_slice(&out);
            }
            // Column pass: vertical sliding max over the row results.
            for ox in 0..ow {
                src.truncate(0);
                src.extend((0..h).map(|y| rows[y * ow + ox]));
                sliding_max(&src, s, &mut out);
                for (oy, &v) in out.iter().enumerate() {
                    data[oy * ow + ox] = v;
                }
            }
        }
        Aggregator::Percentile(p) => {
            // Nearest-rank: the ceil(p * m)-th smallest of the m = s^2
            // window values.
            let m = s * s;
            let rank = (p * m as f64).ceil() as usize;
            let k = rank.max(1) - 1;
            let mut window = vec![0.0f64; m];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut i = 0;
                    for dy in 0..s {
                        for dx in 0..s {
                            window[i] = map.get(oy + dy, ox + dx) as f64;
                            i += 1;
                        }
                    }
                    let (_, kth, _) =
                        window.select_nth_unstable_by(k, |a, b| a.partial_cmp(b).unwrap());
                    data[oy * ow + ox] = *kth;
                }
            }
        }
    }

    Ok(SliceErrorMap {
        height: oh,
        width: ow,
        slice: s,
        data,
    })
}

/// Gaussian fitted to all validation slice errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianRef {
    pub mu: f64,
    pub sigma: f64,
    /// Number of slice errors the fit saw.
    pub n: u64,
    pub slice: usize,
    pub aggregator: Aggregator,
}

impl GaussianRef {
    /// Fits mean and population standard deviation with Welford's
    /// single-pass recurrence. Needs at least two values and a non-degenerate
    /// spread (`sigma >= 1e-12`).
    pub fn fit(values: impl IntoIterator<Item = f64>, slice: usize, aggregator: Aggregator) -> Result<Self> {
        let mut n = 0u64;
        let mut mean = 0.0f64;
        let mut m2 = 0.0f64;
        for v in values {
            n += 1;
            let d = v - mean;
            mean += d / n as f64;
            m2 += d * (v - mean);
        }
        if n < 2 {
            return Err(Error::EmptyInput {
                what: "reference fit needs at least two slice errors",
            });
        }
        let sigma = (m2 / n as f64).sqrt();
        if sigma < 1e-12 {
            return Err(Error::DegenerateReference { sigma });
        }
        Ok(Self {
            mu: mean,
            sigma,
            n,
            slice,
            aggregator,
        })
    }

    /// Probability that a reference slice error is at most `q`.
    pub fn cdf(&self, q: f64) -> f64 {
        normal_cdf((q - self.mu) / self.sigma)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        std::fs::write(path, json + "\n").map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

fn load_resized(model: &AEModel<f32>, path: &Path) -> Result<ImageTensor> {
    let img = load_image(path)?;
    let side = model.arch.side;
    if img.height() != side || img.width() != side {
        resize_bilinear(&img, side, side)
    } else {
        Ok(img)
    }
}

/// Fits the reference over every slice error of every image in the
/// validation manifest, in manifest order.
pub fn fit_reference(
    model: &AEModel<f32>,
    manifest: &Manifest,
    cfg: &SliceConfig,
) -> Result<GaussianRef> {
    cfg.aggregator.validate()?;
    if manifest.is_empty() {
        return Err(Error::EmptyInput { what: "validation manifest" });
    }
    // Slice maps are computed in parallel but consumed in manifest order.
    let maps: Vec<SliceErrorMap> = manifest
        .entries
        .par_iter()
        .map(|entry| -> Result<SliceErrorMap> {
            let img = load_resized(model, &manifest.image_path(entry))?;
            let emap = model.error_map(&img)?;
            slice_errors(&emap, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    GaussianRef::fit(
        maps.iter().flat_map(|m| m.values().iter().copied()),
        cfg.slice,
        cfg.aggregator,
    )
}

/// Scores one image against a reference: returns `(q_max, cdf)`.
///
/// The slice configuration must match the one the reference was fitted
/// with; a mismatch is an error rather than a silently wrong score.
pub fn score_image(
    model: &AEModel<f32>,
    reference: &GaussianRef,
    img: &ImageTensor,
    cfg: &SliceConfig,
) -> Result<(f64, f64)> {
    if cfg.slice != reference.slice {
        return Err(Error::ReferenceMismatch {
            detail: format!(
                "scoring with slice {} but the reference was fitted at {}",
                cfg.slice, reference.slice
            ),
        });
    }
    if cfg.aggregator != reference.aggregator {
        return Err(Error::ReferenceMismatch {
            detail: format!(
                "scoring with aggregator {} but the reference was fitted with {}",
                cfg.aggregator.label(),
                reference.aggregator.label()
            ),
        });
    }
    let emap = model.error_map(img)?;
    let slices = slice_errors(&emap, cfg)?;
    let q_max = slices.max_value();
    Ok((q_max, reference.cdf(q_max)))
}

/// Verdict rule. Thresholds live in `[0.5, 1]`; the boundary `cdf == t`
/// counts as poisoned.
pub fn classify(cdf: f64, threshold: f64) -> Result<bool> {
    if !(0.5..=1.0).contains(&threshold) {
        return Err(Error::InvalidParam {
            name: "threshold",
            detail: format!("{threshold} is outside [0.5, 1]"),
        });
    }
    Ok(cdf >= threshold)
}

/// One scanned image. `truth` echoes the manifest's own `poisoned` flag so
/// downstream evaluation can join without the sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub image: String,
    pub q_max: f64,
    pub cdf: f64,
    pub verdict: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistBin {
    pub left: f64,
    pub right: f64,
    /// Expected count of reference slice errors in this bin: the Gaussian
    /// bin mass scaled to the scanned report count.
    pub reference: f64,
    pub clean: u64,
    pub poisoned: u64,
}

#[derive(Debug)]
pub struct ScanOutcome {
    pub reports: Vec<DetectionReport>,
    pub histogram: Vec<HistBin>,
}

const HIST_BINS: usize = 32;

fn build_histogram(reports: &[DetectionReport], reference: &GaussianRef) -> Vec<HistBin> {
    if reports.is_empty() {
        return Vec::new();
    }
    let (mut lo, mut hi) = (
        reference.mu - 4.0 * reference.sigma,
        reference.mu + 4.0 * reference.sigma,
    );
    for r in reports {
        lo = lo.min(r.q_max);
        hi = hi.max(r.q_max);
    }
    let span = (hi - lo).max(1e-12);
    let width = span / HIST_BINS as f64;
    let mut bins: Vec<HistBin> = (0..HIST_BINS)
        .map(|i| {
            let left = lo + width * i as f64;
            let right = if i + 1 == HIST_BINS { hi } else { lo + width * (i + 1) as f64 };
            let mass = reference.cdf(right) - reference.cdf(left);
            HistBin {
                left,
                right,
                reference: mass * reports.len() as f64,
                clean: 0,
                poisoned: 0,
            }
        })
        .collect();
    for r in reports {
        let idx = (((r.q_max - lo) / width) as usize).min(HIST_BINS - 1);
        if r.truth == Some(true) {
            bins[idx].poisoned += 1;
        } else {
            bins[idx].clean += 1;
        }
    }
    bins
}

/// Scores and classifies every manifest entry. An empty manifest yields an
/// empty outcome rather than an error.
pub fn scan(
    model: &AEModel<f32>,
    reference: &GaussianRef,
    manifest: &Manifest,
    threshold: f64,
) -> Result<ScanOutcome> {
    classify(0.5, threshold)?; // validate the threshold up front
    let cfg = SliceConfig {
        slice: reference.slice,
        aggregator: reference.aggregator,
    };
    let reports: Vec<DetectionReport> = manifest
        .entries
        .par_iter()
        .map(|entry| -> Result<DetectionReport> {
            let img = load_resized(model, &manifest.image_path(entry))?;
            let (q_max, cdf) = score_image(model, reference, &img, &cfg)?;
            Ok(DetectionReport {
                image: entry.image.clone(),
                q_max,
                cdf,
                verdict: classify(cdf, threshold)?,
                truth: Some(entry.poisoned),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let histogram = build_histogram(&reports, reference);
    Ok(ScanOutcome { reports, histogram })
}

/// Writes reports as JSONL, one per line, in scan order.
pub fn save_reports(reports: &[DetectionReport], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut w = BufWriter::new(file);
    for report in reports {
        let line = serde_json::to_string(report).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        w.write_all(line.as_bytes())
            .and_then(|_| w.write_all(b"\n"))
            .map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
    }
    w.flush().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn load_reports(path: &Path) -> Result<Vec<DetectionReport>> {
    let file = File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut reports = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let report: DetectionReport =
            serde_json::from_str(&line).map_err(|e| Error::ManifestLine {
                path: path.to_path_buf(),
                line: idx + 1,
                source: e,
            })?;
        reports.push(report);
    }
    Ok(reports)
}

/// Histogram CSV: `bin_left,bin_right,count_val_reference,count_clean_test,
/// count_poisoned_test`, one row per bin.
pub fn write_histogram_csv(bins: &[HistBin], path: &Path) -> Result<()> {
    let mut text = String::from(
        "bin_left,bin_right,count_val_reference,count_clean_test,count_poisoned_test\n",
    );
    for b in bins {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            b.left, b.right, b.reference, b.clean, b.poisoned
        ));
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
