//! Per-class Dice thresholds and the gate that decides which pairs are
//! worth asking the critic about.
//!
//! ```text
//! cargo run --example dice_gate
//! ```

use labelqc::dsc::{compute_class_stats, pair_dice, should_compare, DiceSpace};
use labelqc::synthetic::{generate_batch, PairKind};
use labelqc::OrganClass;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cases = generate_batch(40, 9, [32, 28, 40]);
    let mut samples = Vec::new();
    for c in &cases {
        let d = pair_dice(&c.candidates[0], &c.candidates[1], DiceSpace::Projected)?;
        samples.push((c.class, d));
    }
    let classes: Vec<OrganClass> = cases.iter().map(|c| c.class).collect();
    let report = compute_class_stats(&samples, &classes);
    for s in &report.stats {
        println!(
            "{:<8} mean {:.3}  std {:.3}  threshold {:.3}",
            s.class, s.mean, s.std, s.threshold
        );
    }
    println!();
    for (c, (_, d)) in cases.iter().zip(&samples).take(12) {
        let stats = report.get(c.class).expect("every class has samples");
        let kind = match c.kind {
            PairKind::NearIdentical => "near-identical",
            PairKind::Corrupted(_) => "corrupted",
            PairKind::Absent => "organ absent",
        };
        let verdict = if should_compare(*d, stats) {
            "compare"
        } else {
            "skip"
        };
        println!(
            "{} {:<8} {:<15} dice {:.3} -> {verdict}",
            c.case_id, c.class, kind, d
        );
    }
    Ok(())
}
