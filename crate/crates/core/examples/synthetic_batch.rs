//! Generate a synthetic phantom batch, run the comparison pipeline on it
//! with a scripted critic and print the outcome counts and accuracy.
//!
//! ```text
//! cargo run --example synthetic_batch -- [cases] [out_dir]
//! ```

use std::sync::Arc;
use std::time::Instant;

use labelqc::critic::{run_dataset, RunConfig, RunOptions, Workspace};
use labelqc::gateway::TranscriptBackend;
use labelqc::report::{compute_accuracy_table, GroundTruth};
use labelqc::synthetic::{generate_batch, write_batch, DEFAULT_DIMS};
use labelqc::volume::{CaseManifest, RunMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(40);
    let out = args
        .next()
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("labelqc-synthetic"));
    if out.exists() {
        std::fs::remove_dir_all(&out)?;
    }

    let started = Instant::now();
    let cases = generate_batch(n, 2024, DEFAULT_DIMS);
    let files = write_batch(&out.join("data"), &cases)?;
    println!("wrote {n} cases in {:.1?}", started.elapsed());

    let workspace = Workspace::open(&out.join("run"))?;
    let backend = Arc::new(TranscriptBackend::load(&files.mock_transcript)?);
    let critic = RunConfig::default().critic(backend, &workspace)?;
    let manifest = CaseManifest::load(&files.manifest)?;
    let started = Instant::now();
    let summary = run_dataset(
        &manifest,
        &critic,
        &workspace,
        &RunOptions::new(RunMode::Compare),
    )?;
    println!("ran in {:.1?}", started.elapsed());

    for s in &summary.thresholds {
        println!("{:<8} threshold {:.3}", s.class, s.threshold);
    }
    for (class, counts) in &summary.counts {
        println!("{class:<8} {counts:?}");
    }
    println!("review queue: {} items", workspace.review.all().len());

    let truth = GroundTruth::load_csv(&files.truth)?;
    let verdicts: Vec<_> = workspace
        .verdicts
        .verdicts()
        .into_iter()
        .map(|r| r.verdict)
        .collect();
    print!(
        "{}",
        compute_accuracy_table(&verdicts, &truth).to_markdown()
    );
    println!("outputs in {}", out.display());
    Ok(())
}
