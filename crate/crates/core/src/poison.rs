//! Dataset poisoning: blends a trigger patch into a chosen fraction of a
//! corpus and rewrites every object label on the touched images to one
//! target class. Writes a poisoned copy of the dataset plus a ground-truth
//! sidecar, leaving the input untouched.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{blend_patch, ImageTensor};
use crate::io::{load_image, save_image};
use crate::manifest::{Manifest, ManifestEntry};
use crate::rng::SplitMix64;

/// Where the patch lands on each selected image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// Uniform over all positions where the patch fits, drawn per image
    /// (x first, then y).
    Random,
    TopLeft,
    Fixed { x: u32, y: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoisonMode {
    /// Selected images are replaced by their poisoned version in place.
    Replace,
    /// All clean images are kept and poisoned copies are appended.
    Append,
}

#[derive(Debug, Clone)]
pub struct PoisonConfig {
    /// Fraction of the corpus to poison, in `[0, 1]`. The count is
    /// `round(rate * len)`, half away from zero.
    pub rate: f64,
    /// Blend opacity.
    pub alpha: f32,
    /// Every object label on a poisoned image is rewritten to this class.
    pub target_class: u32,
    pub placement: Placement,
    pub mode: PoisonMode,
    pub seed: u64,
}

impl Default for PoisonConfig {
    fn default() -> Self {
        Self {
            rate: 0.3,
            alpha: 0.8,
            target_class: 0,
            placement: Placement::Random,
            mode: PoisonMode::Replace,
            seed: 0,
        }
    }
}

/// Ground truth for one output manifest line, in the same order as the
/// output manifest. `position` is present exactly when `poisoned` is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoisonRecord {
    pub image: String,
    pub poisoned: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<(u32, u32)>,
    pub original_classes: Vec<u32>,
    pub rewritten_classes: Vec<u32>,
}

#[derive(Debug)]
pub struct PoisonOutcome {
    pub manifest: Manifest,
    pub records: Vec<PoisonRecord>,
}

/// File name of the sidecar written next to the poisoned manifest.
pub const RECORDS_FILE: &str = "poison_records.jsonl";

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn poisoned_name(image: &str, mode: PoisonMode) -> String {
    let path = Path::new(image);
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("image");
    let file = match mode {
        PoisonMode::Replace => format!("{stem}.png"),
        PoisonMode::Append => format!("{stem}_poisoned.png"),
    };
    path.with_file_name(file).to_string_lossy().into_owned()
}

fn copy_verbatim(src: &Path, dst: &Path) -> Result<()> {
    if let Some(parent) = dst.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    std::fs::copy(src, dst).map_err(|e| io_err(src, e))?;
    Ok(())
}

struct Poisoner<'a> {
    patch: &'a ImageTensor,
    cfg: &'a PoisonConfig,
    rng: SplitMix64,
}

impl Poisoner<'_> {
    /// Draws or validates the patch position for one image.
    fn position(&mut self, img: &ImageTensor) -> Result<(u32, u32)> {
        let (h, w) = (img.height(), img.width());
        let (ph, pw) = (self.patch.height(), self.patch.width());
        if pw > w || ph > h {
            return Err(Error::PatchPlacement {
                detail: format!("{pw}x{ph} patch exceeds {w}x{h} image"),
            });
        }
        match self.cfg.placement {
            Placement::Random => {
                let x = self.rng.next_below((w - pw + 1) as u64) as u32;
                let y = self.rng.next_below((h - ph + 1) as u64) as u32;
                Ok((x, y))
            }
            Placement::TopLeft => Ok((0, 0)),
            Placement::Fixed { x, y } => Ok((x, y)),
        }
    }

    fn poison_one(
        &mut self,
        input: &Manifest,
        entry: &ManifestEntry,
        out_dir: &Path,
    ) -> Result<(ManifestEntry, PoisonRecord)> {
        let img = load_image(&input.image_path(entry))?;
        let (x, y) = self.position(&img)?;
        let blended = blend_patch(&img, self.patch, x as usize, y as usize, self.cfg.alpha)?;
        let name = poisoned_name(&entry.image, self.cfg.mode);
        let dst = out_dir.join(&name);
        if let Some(parent) = dst.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        save_image(&dst, &blended)?;

        let original_classes: Vec<u32> = entry.objects.iter().map(|o| o.class).collect();
        let mut objects = entry.objects.clone();
        for obj in &mut objects {
            obj.class = self.cfg.target_class;
        }
        let rewritten_classes: Vec<u32> = objects.iter().map(|o| o.class).collect();
        Ok((
            ManifestEntry {
                image: name.clone(),
                objects,
                poisoned: true,
            },
            PoisonRecord {
                image: name,
                poisoned: true,
                position: Some((x, y)),
                original_classes,
                rewritten_classes,
            },
        ))
    }
}

fn clean_record(entry: &ManifestEntry) -> PoisonRecord {
    let classes: Vec<u32> = entry.objects.iter().map(|o| o.class).collect();
    PoisonRecord {
        image: entry.image.clone(),
        poisoned: false,
        position: None,
        original_classes: classes.clone(),
        rewritten_classes: classes,
    }
}

/// Poisons `input` into `out_dir`. Writes every output image (clean files
/// are copied byte for byte, poisoned ones re-encoded as 8-bit PNG), plus
/// `manifest.jsonl` and [`RECORDS_FILE`]. Returns the output manifest and
/// the aligned records.
pub fn poison_dataset(
    input: &Manifest,
    patch: &ImageTensor,
    cfg: &PoisonConfig,
    out_dir: &Path,
) -> Result<PoisonOutcome> {
    if !(0.0..=1.0).contains(&cfg.rate) {
        return Err(Error::InvalidParam {
            name: "rate",
            detail: format!("{} is outside [0, 1]", cfg.rate),
        });
    }
    if !(0.0..=1.0).contains(&cfg.alpha) {
        return Err(Error::InvalidParam {
            name: "alpha",
            detail: format!("{} is outside [0, 1]", cfg.alpha),
        });
    }
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    // Writing into the source directory would overwrite inputs mid-run.
    if input.root().exists() {
        let same = match (input.root().canonicalize(), out_dir.canonicalize()) {
            (Ok(a), Ok(b)) => a == b,
            _ => false,
        };
        if same {
            return Err(Error::InvalidParam {
                name: "out_dir",
                detail: "must differ from the input manifest directory".to_string(),
            });
        }
    }

    let n = input.len();
    let k = (cfg.rate * n as f64 + 0.5).floor() as usize;
    let mut rng = SplitMix64::new(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut selected = vec![false; n];
    for &i in order.iter().take(k) {
        selected[i] = true;
    }

    let mut poisoner = Poisoner { patch, cfg, rng };
    let mut entries = Vec::with_capacity(n + if cfg.mode == PoisonMode::Append { k } else { 0 });
    let mut records = Vec::with_capacity(entries.capacity());

    // Clean lines first (all of them in append mode, the unselected ones in
    // replace mode), then the poisoned lines in manifest order. In replace
    // mode poisoned lines stay in place instead.
    for (i, entry) in input.entries.iter().enumerate() {
        let keep_clean = cfg.mode == PoisonMode::Append || !selected[i];
        if keep_clean {
            copy_verbatim(&input.image_path(entry), &out_dir.join(&entry.image))?;
            entries.push(entry.clone());
            records.push(clean_record(entry));
        }
        if selected[i] && cfg.mode == PoisonMode::Replace {
            let (entry, record) = poisoner.poison_one(input, entry, out_dir)?;
            entries.push(entry);
            records.push(record);
        }
    }
    if cfg.mode == PoisonMode::Append {
        for (i, entry) in input.entries.iter().enumerate() {
            if selected[i] {
                let (entry, record) = poisoner.poison_one(input, entry, out_dir)?;
                entries.push(entry);
                records.push(record);
            }
        }
    }

    let manifest = Manifest::from_parts(out_dir.to_path_buf(), entries);
    manifest.save(&out_dir.join("manifest.jsonl"))?;
    save_records(&records, &out_dir.join(RECORDS_FILE))?;
    Ok(PoisonOutcome { manifest, records })
}

/// Writes records as JSONL, one per line, in order.
pub fn save_records(records: &[PoisonRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        w.write_all(line.as_bytes())
            .and_then(|_| w.write_all(b"\n"))
            .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn load_records(path: &Path) -> Result<Vec<PoisonRecord>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PoisonRecord = serde_json::from_str(&line).map_err(|e| Error::ManifestLine {
            path: path.to_path_buf(),
            line: idx + 1,
            source: e,
        })?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_corpus, gen_patch, ImageStyle, PatchKind, PatchSpec, SynthConfig};

    fn corpus(dir: &Path, count: usize, seed: u64) -> Manifest {
        gen_corpus(
            &SynthConfig {
                count,
                side: 16,
                style: ImageStyle::Shapes,
                seed,
            },
            dir,
        )
        .unwrap()
    }

    fn small_patch() -> ImageTensor {
        gen_patch(&PatchSpec {
            kind: PatchKind::Checkerboard { cell: 1 },
            side: 5,
            seed: 0,
        })
        .unwrap()
    }

    #[test]
    fn poison_count_uses_half_up_rounding() {
        let dir = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        let input = corpus(&dir.path().join("in"), 10, 1);
        for (rate, expect) in [(0.0, 0usize), (0.3, 3), (0.25, 3), (0.24, 2), (1.0, 10)] {
            let cfg = PoisonConfig {
                rate,
                seed: 9,
                ..PoisonConfig::default()
            };
            let out_dir = out.path().join(format!("r{expect}_{rate}"));
            let outcome = poison_dataset(&input, &small_patch(), &cfg, &out_dir).unwrap();
            let poisoned = outcome.records.iter().filter(|r| r.poisoned).count();
            assert_eq!(poisoned, expect, "rate {rate}");
        }
    }

    #[test]
    fn replace_mode_keeps_length_and_copies_clean_files_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        let input = corpus(&dir.path().join("in"), 8, 2);
        let cfg = PoisonConfig {
            rate: 0.5,
            seed: 4,
            ..PoisonConfig::default()
        };
        let outcome = poison_dataset(&input, &small_patch(), &cfg, out.path()).unwrap();
        assert_eq!(outcome.manifest.len(), 8);
        assert_eq!(outcome.records.len(), 8);
        for (entry, record) in outcome.manifest.entries.iter().zip(&outcome.records) {
            assert_eq!(entry.poisoned, record.poisoned);
            assert_eq!(entry.image, record.image);
            assert_eq!(record.position.is_some(), record.poisoned);
            if record.poisoned {
                assert!(record.rewritten_classes.iter().all(|&c| c == cfg.target_class));
                assert_eq!(record.original_classes.len(), record.rewritten_classes.len());
            } else {
                let src = std::fs::read(input.root().join(&entry.image)).unwrap();
                let dst = std::fs::read(out.path().join(&entry.image)).unwrap();
                assert_eq!(src, dst);
                assert_eq!(record.original_classes, record.rewritten_classes);
            }
        }
    }

    #[test]
    fn append_mode_adds_poisoned_copies_after_clean_lines() {
        let dir = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        let input = corpus(&dir.path().join("in"), 6, 3);
        let cfg = PoisonConfig {
            rate: 1.0,
            mode: PoisonMode::Append,
            seed: 5,
            ..PoisonConfig::default()
        };
        let outcome = poison_dataset(&input, &small_patch(), &cfg, out.path()).unwrap();
        assert_eq!(outcome.manifest.len(), 12);
        assert!(outcome.manifest.entries[..6].iter().all(|e| !e.poisoned));
        assert!(outcome.manifest.entries[6..].iter().all(|e| e.poisoned));
        for entry in &outcome.manifest.entries[6..] {
            assert!(entry.image.ends_with("_poisoned.png"));
        }
    }

    #[test]
    fn poisoned_pixels_match_the_blend_formula() {
        let dir = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        let input = corpus(&dir.path().join("in"), 3, 7);
        let patch = small_patch();
        let cfg = PoisonConfig {
            rate: 1.0,
            placement: Placement::Fixed { x: 2, y: 3 },
            ..PoisonConfig::default()
        };
        let outcome = poison_dataset(&input, &patch, &cfg, out.path()).unwrap();
        for (entry, record) in outcome.manifest.entries.iter().zip(&outcome.records) {
            let original = load_image(&input.image_path(&input.entries[0])).unwrap();
            let _ = original;
            let src = load_image(
                &input.image_path(
                    input
                        .entries
                        .iter()
                        .find(|e| {
                            Path::new(&e.image).file_stem() == Path::new(&entry.image).file_stem()
                        })
                        .unwrap(),
                ),
            )
            .unwrap();
            let (x, y) = record.position.unwrap();
            let expected = blend_patch(&src, &patch, x as usize, y as usize, cfg.alpha).unwrap();
            let written = load_image(&out.path().join(&entry.image)).unwrap();
            // The written file went through 8-bit quantization.
            for (&got, &want) in written.data().iter().zip(expected.data()) {
                let requantized = (want * 255.0).round() / 255.0;
                assert!((got - requantized).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn reruns_are_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let input = corpus(&dir.path().join("in"), 10, 11);
        let cfg = PoisonConfig {
            rate: 0.4,
            seed: 21,
            ..PoisonConfig::default()
        };
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        let a = poison_dataset(&input, &small_patch(), &cfg, &out_a).unwrap();
        let b = poison_dataset(&input, &small_patch(), &cfg, &out_b).unwrap();
        assert_eq!(a.records, b.records);
        for entry in &a.manifest.entries {
            let ba = std::fs::read(out_a.join(&entry.image)).unwrap();
            let bb = std::fs::read(out_b.join(&entry.image)).unwrap();
            assert_eq!(ba, bb);
        }
        assert_eq!(
            std::fs::read(out_a.join(RECORDS_FILE)).unwrap(),
            std::fs::read(out_b.join(RECORDS_FILE)).unwrap()
        );
    }

    #[test]
    fn records_round_trip_through_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![
            PoisonRecord {
                image: "a.png".into(),
                poisoned: false,
                position: None,
                original_classes: vec![1, 2],
                rewritten_classes: vec![1, 2],
            },
            PoisonRecord {
                image: "b.png".into(),
                poisoned: true,
                position: Some((4, 9)),
                original_classes: vec![1],
                rewritten_classes: vec![0],
            },
        ];
        let path = dir.path().join(RECORDS_FILE);
        save_records(&records, &path).unwrap();
        assert_eq!(load_records(&path).unwrap(), records);
        // Clean records omit the position key entirely.
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(!text.lines().next().unwrap().contains("position"));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let input = corpus(&dir.path().join("in"), 2, 1);
        let patch = small_patch();
        let out = dir.path().join("out");
        let bad_rate = PoisonConfig {
            rate: 1.5,
            ..PoisonConfig::default()
        };
        assert!(poison_dataset(&input, &patch, &bad_rate, &out).is_err());

        let bad_fixed = PoisonConfig {
            rate: 1.0,
            placement: Placement::Fixed { x: 14, y: 0 },
            ..PoisonConfig::default()
        };
        assert!(poison_dataset(&input, &patch, &bad_fixed, &out).is_err());

        let huge = gen_patch(&PatchSpec {
            kind: PatchKind::Noise,
            side: 32,
            seed: 0,
        })
        .unwrap();
        let all = PoisonConfig {
            rate: 1.0,
            ..PoisonConfig::default()
        };
        assert!(poison_dataset(&input, &huge, &all, &out).is_err());

        // Same input and output directory is refused before any write.
        assert!(poison_dataset(&input, &patch, &all, input.root()).is_err());
    }

    #[test]
    fn empty_manifest_produces_empty_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let input = Manifest::from_parts(dir.path().join("in"), vec![]);
        let out = dir.path().join("out");
        let outcome = poison_dataset(&input, &small_patch(), &PoisonConfig::default(), &out).unwrap();
        assert!(outcome.manifest.is_empty());
        assert!(outcome.records.is_empty());
        assert!(out.join("manifest.jsonl").exists());
        assert!(out.join(RECORDS_FILE).exists());
    }
}
