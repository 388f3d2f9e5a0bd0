//! JSON config file: one optional section per subcommand, every field
//! mirroring a flag. Flags win over config values; unknown keys are
//! rejected so typos fail loudly instead of silently using defaults.

use std::path::{Path, PathBuf};

use autodetect::detect::Aggregator;
use autodetect::poison::{Placement, PoisonMode};
use autodetect::synth::{ImageStyle, PatchKind};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub paper_scale: Option<bool>,
    #[serde(default)]
    pub synth: SynthSection,
    #[serde(default)]
    pub patch: PatchSection,
    #[serde(default)]
    pub poison: PoisonSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub detect: DetectSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub count: Option<usize>,
    pub side: Option<usize>,
    pub style: Option<String>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchSection {
    pub kind: Option<String>,
    pub size: Option<usize>,
    pub cell: Option<usize>,
    pub color: Option<String>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoisonSection {
    pub manifest: Option<PathBuf>,
    pub patch: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub rate: Option<f64>,
    pub alpha: Option<f64>,
    pub target_class: Option<u32>,
    pub placement: Option<String>,
    pub mode: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub epochs: Option<u32>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
    pub side: Option<usize>,
    pub widths: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectSection {
    pub model: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub histogram: Option<PathBuf>,
    pub slice: Option<usize>,
    pub aggregator: Option<String>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub report: Option<PathBuf>,
    pub records: Option<PathBuf>,
    pub roc: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub model: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub work_dir: Option<PathBuf>,
    pub kind: Option<String>,
    pub cell: Option<usize>,
    pub color: Option<String>,
    pub patch_sides: Option<String>,
    pub slice_sides: Option<String>,
    pub seeds: Option<String>,
    pub alpha: Option<f64>,
    pub target_class: Option<u32>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

/// A required setting that neither a flag nor the config supplied.
pub fn require<T>(value: Option<T>, flag: &str, key: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("missing {flag} (config key {key})")))
}

fn bad(key: &str, detail: String) -> CliError {
    CliError::Usage(format!("{key}: {detail}"))
}

pub fn parse_style(s: &str, key: &str) -> Result<ImageStyle, CliError> {
    match s {
        "smooth" => Ok(ImageStyle::Smooth),
        "shapes" => Ok(ImageStyle::Shapes),
        other => Err(bad(key, format!("{other:?} is not smooth or shapes"))),
    }
}

pub fn parse_color(s: &str, key: &str) -> Result<[f32; 3], CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(bad(key, format!("{s:?} is not R,G,B")));
    }
    let mut rgb = [0.0f32; 3];
    for (slot, part) in rgb.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| bad(key, format!("{part:?} is not a number")))?;
        if !(0.0..=1.0).contains(slot) {
            return Err(bad(key, format!("component {part} is outside [0, 1]")));
        }
    }
    Ok(rgb)
}

/// Builds the patch kind from its name plus the kind-specific knobs.
pub fn parse_patch_kind(
    kind: &str,
    cell: usize,
    color: &str,
    key: &str,
) -> Result<PatchKind, CliError> {
    match kind {
        "checkerboard" => Ok(PatchKind::Checkerboard { cell }),
        "noise" => Ok(PatchKind::Noise),
        "solid" => Ok(PatchKind::Solid {
            rgb: parse_color(color, key)?,
        }),
        other => Err(bad(
            key,
            format!("{other:?} is not checkerboard, noise, or solid"),
        )),
    }
}

pub fn parse_placement(s: &str, key: &str) -> Result<Placement, CliError> {
    match s {
        "random" => Ok(Placement::Random),
        "top_left" => Ok(Placement::TopLeft),
        other => {
            let coords = other.strip_prefix("fixed:").ok_or_else(|| {
                bad(key, format!("{other:?} is not random, top_left, or fixed:X,Y"))
            })?;
            let (x, y) = coords
                .split_once(',')
                .ok_or_else(|| bad(key, format!("{coords:?} is not X,Y")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<u32>()
                    .map_err(|_| bad(key, format!("{v:?} is not a pixel coordinate")))
            };
            Ok(Placement::Fixed {
                x: parse(x)?,
                y: parse(y)?,
            })
        }
    }
}

pub fn parse_mode(s: &str, key: &str) -> Result<PoisonMode, CliError> {
    match s {
        "replace" => Ok(PoisonMode::Replace),
        "append" => Ok(PoisonMode::Append),
        other => Err(bad(key, format!("{other:?} is not replace or append"))),
    }
}

pub fn parse_aggregator(s: &str, key: &str) -> Result<Aggregator, CliError> {
    s.parse().map_err(|e| bad(key, format!("{e}")))
}

pub fn parse_usize_list(s: &str, key: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse()
                .map_err(|_| bad(key, format!("{part:?} is not an integer")))
        })
        .collect()
}

pub fn parse_u64_list(s: &str, key: &str) -> Result<Vec<u64>, CliError> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse()
                .map_err(|_| bad(key, format!("{part:?} is not an integer")))
        })
        .collect()
}

pub fn parse_widths(s: &str, key: &str) -> Result<[usize; 3], CliError> {
    let list = parse_usize_list(s, key)?;
    <[usize; 3]>::try_from(list)
        .map_err(|_| bad(key, format!("{s:?} is not three comma-separated widths")))
}

pub fn check_unit(value: f64, flag: &str) -> Result<f64, CliError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(CliError::Usage(format!("{flag}: {value} is outside [0, 1]")))
    }
}

pub fn check_threshold(value: f64, flag: &str) -> Result<f64, CliError> {
    if (0.5..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(CliError::Usage(format!("{flag}: {value} is outside [0.5, 1]")))
    }
}
