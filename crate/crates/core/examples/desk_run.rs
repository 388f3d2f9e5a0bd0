//! End-to-end desk-scale run: generate corpora, train the autoencoder,
//! poison the test split, fit a reference, scan, and report AUROC plus the
//! clean-validation flag rate.
//!
//! Usage: `cargo run --release --example desk_run -- [seed] [epochs] [train_count]`

use std::time::Instant;

use autodetect::autoenc::{train, ArchDescriptor, TrainConfig};
use autodetect::detect::{fit_reference, scan, Aggregator, SliceConfig};
use autodetect::metrics::{auroc, scores_from_reports};
use autodetect::poison::{poison_dataset, Placement, PoisonConfig, PoisonMode};
use autodetect::rng::derive_seed;
use autodetect::synth::{gen_corpus, gen_patch, ImageStyle, PatchKind, PatchSpec, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).map_or(Ok(0), |s| s.parse())?;
    let epochs: u32 = args.get(2).map_or(Ok(50), |s| s.parse())?;
    let train_count: usize = args.get(3).map_or(Ok(500), |s| s.parse())?;
    let style = match args.get(4).map(String::as_str) {
        Some("smooth") => ImageStyle::Smooth,
        _ => ImageStyle::Shapes,
    };
    let train_seed: u64 = match args.get(5) {
        Some(s) => s.parse()?,
        None => derive_seed(seed, &[4]),
    };

    let side = 64usize;
    let root = std::env::temp_dir().join(format!("desk_run_{seed}_{epochs}_{train_count}"));
    if root.exists() {
        std::fs::remove_dir_all(&root)?;
    }
    std::fs::create_dir_all(&root)?;
    eprintln!("workspace: {}", root.display());

    let t0 = Instant::now();
    let train_set = gen_corpus(
        &SynthConfig { count: train_count, side, style, seed: derive_seed(seed, &[1]) },
        &root.join("train"),
    )?;
    let val_set = gen_corpus(
        &SynthConfig { count: 100, side, style, seed: derive_seed(seed, &[2]) },
        &root.join("val"),
    )?;
    let test_set = gen_corpus(
        &SynthConfig { count: 100, side, style, seed: derive_seed(seed, &[3]) },
        &root.join("test"),
    )?;
    eprintln!("corpora generated in {:.1?}", t0.elapsed());

    let t1 = Instant::now();
    let arch = ArchDescriptor { side, channels: 3, widths: [16, 32, 64] };
    let cfg = TrainConfig { epochs, seed: train_seed, ..TrainConfig::default() };
    let (model, losses) = train(&train_set, &arch, &cfg)?;
    eprintln!(
        "trained {} epochs in {:.1?}; first epoch loss {:.6}, last {:.6}",
        epochs,
        t1.elapsed(),
        losses.first().copied().unwrap_or(0.0),
        losses.last().copied().unwrap_or(0.0),
    );

    let t2 = Instant::now();
    let patch = gen_patch(&PatchSpec {
        kind: PatchKind::Checkerboard { cell: 1 },
        side: 13,
        seed: derive_seed(seed, &[5]),
    })?;
    let poisoned = poison_dataset(
        &test_set,
        &patch,
        &PoisonConfig {
            rate: 1.0,
            alpha: 0.8,
            target_class: 0,
            placement: Placement::Random,
            mode: PoisonMode::Append,
            seed: derive_seed(seed, &[6]),
        },
        &root.join("test_poisoned"),
    )?;
    eprintln!("poisoned test split in {:.1?}", t2.elapsed());

    let t3 = Instant::now();
    let slice_cfg = SliceConfig { slice: 13, aggregator: Aggregator::Mean };
    let reference = fit_reference(&model, &val_set, &slice_cfg)?;
    eprintln!(
        "reference fitted in {:.1?}: mu {:.6}, sigma {:.6}, n {}",
        t3.elapsed(),
        reference.mu,
        reference.sigma,
        reference.n
    );

    let t4 = Instant::now();
    let outcome = scan(&model, &reference, &poisoned.manifest, 0.95)?;
    let scores = scores_from_reports(&outcome.reports)?;
    let area = auroc(&scores)?;
    let flagged = outcome.reports.iter().filter(|r| r.verdict).count();
    eprintln!("scanned {} images in {:.1?}", outcome.reports.len(), t4.elapsed());
    println!("auroc {:.4}  flagged {}/{}", area, flagged, outcome.reports.len());

    let clean_scan = scan(&model, &reference, &val_set, 0.95)?;
    let clean_flagged = clean_scan.reports.iter().filter(|r| r.verdict).count();
    println!(
        "clean validation flag rate {}/{} at t=0.95",
        clean_flagged,
        clean_scan.reports.len()
    );

    // Distribution diagnostics: where clean q_max values sit relative to
    // the flag threshold in q units.
    let q_star = reference.mu + 1.6448536269514722 * reference.sigma;
    let mut ranked: Vec<(&str, f64)> = clean_scan
        .reports
        .iter()
        .map(|r| (r.image.as_str(), r.q_max))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    eprint!("top clean q_max:");
    for (name, q) in ranked.iter().take(14) {
        let idx: usize = name[4..9].parse().unwrap_or(usize::MAX);
        let tag = if idx % autodetect::synth::ANCHOR_STRIDE == 0 { "A" } else { "" };
        eprint!(" {}{tag}={q:.4}", &name[4..9]);
    }
    eprintln!();
    let mut q: Vec<f64> = clean_scan.reports.iter().map(|r| r.q_max).collect();
    q.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pct = |p: f64| q[((p * q.len() as f64) as usize).min(q.len() - 1)];
    eprintln!(
        "clean q_max deciles: p10 {:.5} p50 {:.5} p90 {:.5} max {:.5} | threshold {:.5}",
        pct(0.10),
        pct(0.50),
        pct(0.90),
        q[q.len() - 1],
        q_star
    );
    let mut poisoned_q: Vec<f64> = outcome
        .reports
        .iter()
        .filter(|r| r.truth == Some(true))
        .map(|r| r.q_max)
        .collect();
    poisoned_q.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eprintln!(
        "poisoned q_max min {:.5} p50 {:.5}",
        poisoned_q[0],
        poisoned_q[poisoned_q.len() / 2]
    );
    println!("total {:.1?}", t0.elapsed());
    Ok(())
}
