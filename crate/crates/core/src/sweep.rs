//! Patch-size x slice-size sweep harness.
//!
//! For every (slice side, patch side, seed) the harness poisons a fresh
//! append-mode copy of the test split, fits a validation reference at that
//! slice side, scans, and computes AUROC. Cells average the seeds. The CSV
//! layout mirrors the usual table: rows are slice sides, columns patch
//! sides, with a trailing mean row and column.

use std::collections::HashMap;
use std::path::Path;

use crate::autoenc::AEModel;
use crate::detect::{fit_reference, scan, Aggregator, GaussianRef, SliceConfig};
use crate::error::{Error, Result};
use crate::manifest::Manifest;
use crate::metrics::{auroc, scores_from_reports};
use crate::poison::{poison_dataset, Placement, PoisonConfig, PoisonMode};
use crate::rng::derive_seed;
use crate::synth::{gen_patch, PatchKind, PatchSpec};

#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Patch texture shared by every cell; sides come from `patch_sides`.
    pub patch_kind: PatchKind,
    pub patch_sides: Vec<usize>,
    pub slice_sides: Vec<usize>,
    /// One full replicate per seed; cells report the mean.
    pub seeds: Vec<u64>,
    pub alpha: f32,
    pub target_class: u32,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            patch_kind: PatchKind::Checkerboard { cell: 1 },
            patch_sides: vec![13, 26],
            slice_sides: vec![13, 26],
            seeds: vec![0, 1, 2],
            alpha: 0.8,
            target_class: 0,
        }
    }
}

/// AUROC grid indexed `[slice][patch]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub patch_sides: Vec<usize>,
    pub slice_sides: Vec<usize>,
    cells: Vec<f64>,
}

impl SweepResult {
    pub fn cell(&self, slice_idx: usize, patch_idx: usize) -> f64 {
        self.cells[slice_idx * self.patch_sides.len() + patch_idx]
    }

    pub fn row_mean(&self, slice_idx: usize) -> f64 {
        let w = self.patch_sides.len();
        self.cells[slice_idx * w..(slice_idx + 1) * w].iter().sum::<f64>() / w as f64
    }

    pub fn col_mean(&self, patch_idx: usize) -> f64 {
        let w = self.patch_sides.len();
        let sum: f64 = (0..self.slice_sides.len())
            .map(|s| self.cells[s * w + patch_idx])
            .sum();
        sum / self.slice_sides.len() as f64
    }

    pub fn grand_mean(&self) -> f64 {
        self.cells.iter().sum::<f64>() / self.cells.len() as f64
    }

    /// Mean over cells whose slice side equals their patch side.
    pub fn diagonal_mean(&self) -> f64 {
        self.partition_mean(true)
    }

    /// Mean over cells whose slice side differs from their patch side.
    pub fn off_diagonal_mean(&self) -> f64 {
        self.partition_mean(false)
    }

    fn partition_mean(&self, matched: bool) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (si, &s) in self.slice_sides.iter().enumerate() {
            for (pi, &p) in self.patch_sides.iter().enumerate() {
                if (s == p) == matched {
                    sum += self.cell(si, pi);
                    count += 1;
                }
            }
        }
        sum / count as f64
    }
}

/// Runs the full grid. Poisoned copies land under
/// `work_dir/cell_s{slice}_p{patch}_r{replicate}`; each replicate owns PRNG
/// streams derived from `base_seed` and the cell coordinates, so cells are
/// independent of evaluation order.
pub fn run_sweep(
    model: &AEModel<f32>,
    val: &Manifest,
    test: &Manifest,
    cfg: &SweepConfig,
    base_seed: u64,
    work_dir: &Path,
) -> Result<SweepResult> {
    if cfg.patch_sides.is_empty() || cfg.slice_sides.is_empty() {
        return Err(Error::EmptyInput { what: "sweep grid sides" });
    }
    if cfg.seeds.is_empty() {
        return Err(Error::EmptyInput { what: "sweep seeds" });
    }
    // References depend only on the slice side, so fit one per row and
    // share it across that row's cells.
    let mut references: HashMap<usize, GaussianRef> = HashMap::new();
    for &s in &cfg.slice_sides {
        if !references.contains_key(&s) {
            let slice_cfg = SliceConfig { slice: s, aggregator: Aggregator::Mean };
            references.insert(s, fit_reference(model, val, &slice_cfg)?);
        }
    }

    let mut cells = Vec::with_capacity(cfg.slice_sides.len() * cfg.patch_sides.len());
    for &s in &cfg.slice_sides {
        let reference = &references[&s];
        for &p in &cfg.patch_sides {
            let mut sum = 0.0f64;
            for (rep, &seed) in cfg.seeds.iter().enumerate() {
                let cell_seed = derive_seed(base_seed, &[s as u64, p as u64, seed]);
                let patch = gen_patch(&PatchSpec {
                    kind: cfg.patch_kind,
                    side: p,
                    seed: derive_seed(cell_seed, &[0]),
                })?;
                let poison_cfg = PoisonConfig {
                    rate: 1.0,
                    alpha: cfg.alpha,
                    target_class: cfg.target_class,
                    placement: Placement::Random,
                    mode: PoisonMode::Append,
                    seed: derive_seed(cell_seed, &[1]),
                };
                let cell_dir = work_dir.join(format!("cell_s{s}_p{p}_r{rep}"));
                let outcome = poison_dataset(test, &patch, &poison_cfg, &cell_dir)?;
                let scanned = scan(model, reference, &outcome.manifest, 0.95)?;
                let scores = scores_from_reports(&scanned.reports)?;
                sum += auroc(&scores)?;
            }
            cells.push(sum / cfg.seeds.len() as f64);
        }
    }

    Ok(SweepResult {
        patch_sides: cfg.patch_sides.clone(),
        slice_sides: cfg.slice_sides.clone(),
        cells,
    })
}

/// Table-layout CSV: header of patch sides, one row per slice side, and a
/// trailing mean row and column.
pub fn write_sweep_csv(result: &SweepResult, path: &Path) -> Result<()> {
    let mut text = String::from("slice\\patch");
    for p in &result.patch_sides {
        text.push_str(&format!(",{p}"));
    }
    text.push_str(",mean\n");
    for (si, s) in result.slice_sides.iter().enumerate() {
        text.push_str(&format!("{s}"));
        for pi in 0..result.patch_sides.len() {
            text.push_str(&format!(",{}", result.cell(si, pi)));
        }
        text.push_str(&format!(",{}\n", result.row_mean(si)));
    }
    text.push_str("mean");
    for pi in 0..result.patch_sides.len() {
        text.push_str(&format!(",{}", result.col_mean(pi)));
    }
    text.push_str(&format!(",{}\n", result.grand_mean()));
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoenc::{init_model, ArchDescriptor};
    use crate::synth::{gen_corpus, ImageStyle, SynthConfig};

    fn tiny_setup(dir: &Path) -> (AEModel<f32>, Manifest, Manifest) {
        let arch = ArchDescriptor { side: 16, channels: 3, widths: [2, 2, 2] };
        let model = init_model::<f32>(&arch, 7).unwrap();
        let val = gen_corpus(
            &SynthConfig { count: 3, side: 16, style: ImageStyle::Smooth, seed: 11 },
            &dir.join("val"),
        )
        .unwrap();
        let test = gen_corpus(
            &SynthConfig { count: 4, side: 16, style: ImageStyle::Smooth, seed: 12 },
            &dir.join("test"),
        )
        .unwrap();
        (model, val, test)
    }

    fn tiny_cfg() -> SweepConfig {
        SweepConfig {
            patch_kind: PatchKind::Checkerboard { cell: 1 },
            patch_sides: vec![2, 3],
            slice_sides: vec![2, 3],
            seeds: vec![0],
            alpha: 0.8,
            target_class: 0,
        }
    }

    #[test]
    fn grid_shape_means_and_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let (model, val, test) = tiny_setup(dir.path());
        let cfg = tiny_cfg();
        let result = run_sweep(&model, &val, &test, &cfg, 5, &dir.path().join("work")).unwrap();

        assert_eq!(result.slice_sides, vec![2, 3]);
        assert_eq!(result.patch_sides, vec![2, 3]);
        for si in 0..2 {
            for pi in 0..2 {
                let c = result.cell(si, pi);
                assert!((0.0..=1.0).contains(&c), "cell {si},{pi} = {c}");
            }
        }
        let grand = (0..2).map(|s| result.row_mean(s)).sum::<f64>() / 2.0;
        assert!((grand - result.grand_mean()).abs() < 1e-12);
        let diag = (result.cell(0, 0) + result.cell(1, 1)) / 2.0;
        assert!((diag - result.diagonal_mean()).abs() < 1e-12);
        let off = (result.cell(0, 1) + result.cell(1, 0)) / 2.0;
        assert!((off - result.off_diagonal_mean()).abs() < 1e-12);

        let csv = dir.path().join("sweep.csv");
        write_sweep_csv(&result, &csv).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        // Header plus one row per slice side plus the mean row.
        assert_eq!(lines.len(), 1 + 2 + 1);
        assert_eq!(lines[0], "slice\\patch,2,3,mean");
        assert!(lines[1].starts_with("2,"));
        assert!(lines[2].starts_with("3,"));
        assert!(lines[3].starts_with("mean,"));
        for line in &lines[1..] {
            assert_eq!(line.matches(',').count(), 3);
        }
    }

    #[test]
    fn reruns_are_identical_and_append_mode_doubles_the_split() {
        let dir = tempfile::tempdir().unwrap();
        let (model, val, test) = tiny_setup(dir.path());
        let cfg = tiny_cfg();
        let a = run_sweep(&model, &val, &test, &cfg, 9, &dir.path().join("w1")).unwrap();
        let b = run_sweep(&model, &val, &test, &cfg, 9, &dir.path().join("w2")).unwrap();
        assert_eq!(a, b);

        let cell_manifest =
            Manifest::load(&dir.path().join("w1/cell_s2_p2_r0/manifest.jsonl")).unwrap();
        assert_eq!(cell_manifest.entries.len(), 2 * test.entries.len());
        let poisoned = cell_manifest.entries.iter().filter(|e| e.poisoned).count();
        assert_eq!(poisoned, test.entries.len());
    }

    #[test]
    fn empty_grid_or_seeds_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let (model, val, test) = tiny_setup(dir.path());
        let mut cfg = tiny_cfg();
        cfg.patch_sides.clear();
        assert!(run_sweep(&model, &val, &test, &cfg, 0, dir.path()).is_err());
        let mut cfg = tiny_cfg();
        cfg.seeds.clear();
        assert!(run_sweep(&model, &val, &test, &cfg, 0, dir.path()).is_err());
    }
}
