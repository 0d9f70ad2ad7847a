//! Score a verdict file against ground truth and print the per-class
//! accuracy table, the same way `labelqc report` does.
//!
//! ```text
//! cargo run --example accuracy_table
//! ```

use labelqc::report::{compute_accuracy_table, GroundTruth, GroundTruthRecord, Truth};
use labelqc::verdict::{CaseOutcome, CaseVerdict, Verdict};
use labelqc::OrganClass;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rows = [
        (
            "s01",
            OrganClass::Liver,
            CaseOutcome::PreferFirst,
            Truth::First,
        ),
        (
            "s02",
            OrganClass::Liver,
            CaseOutcome::PreferSecond,
            Truth::Second,
        ),
        (
            "s03",
            OrganClass::Liver,
            CaseOutcome::PreferFirst,
            Truth::Second,
        ),
        (
            "s04",
            OrganClass::Spleen,
            CaseOutcome::PreferSecond,
            Truth::Second,
        ),
        (
            "s05",
            OrganClass::Spleen,
            CaseOutcome::FlaggedInconsistent,
            Truth::First,
        ),
        (
            "s06",
            OrganClass::Spleen,
            CaseOutcome::SkippedSimilar,
            Truth::First,
        ),
        (
            "s07",
            OrganClass::Stomach,
            CaseOutcome::FlaggedRejected,
            Truth::Second,
        ),
    ];
    let verdicts: Vec<Verdict> = rows
        .iter()
        .map(|(case, class, outcome, _)| {
            Verdict::Pair(CaseVerdict {
                case_id: case.to_string(),
                class: *class,
                outcome: *outcome,
                dsc: None,
                exchange_refs: Vec::new(),
                timestamp_ms: 0,
            })
        })
        .collect();
    let truth = GroundTruth::new(
        rows.iter()
            .map(|(case, class, _, truth)| GroundTruthRecord {
                case_id: case.to_string(),
                class: *class,
                truth: *truth,
            }),
    )?;

    let table = compute_accuracy_table(&verdicts, &truth);
    print!("{}", table.to_markdown());
    println!();
    print!("{}", table.to_csv());
    println!("\nSkipped and flagged cases count towards no denominator; stomach has none decided.");
    Ok(())
}
