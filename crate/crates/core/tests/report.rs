use labelqc::report::{
    compute_accuracy_table, export_report, AccuracyCell, GroundTruth, GroundTruthRecord,
    ReportFormat, Truth,
};
use labelqc::verdict::{
    read_records, CaseOutcome, CaseVerdict, OverrideVerdict, QualityOutcome, QualityVerdict,
    Resolution, Verdict, VerdictStore,
};
use labelqc::{Candidate, OrganClass};
use proptest::prelude::*;

const ALL_OUTCOMES: [CaseOutcome; 9] = [
    CaseOutcome::PreferFirst,
    CaseOutcome::PreferSecond,
    CaseOutcome::SkippedSimilar,
    CaseOutcome::OrganAbsentEmptySelected(Candidate::First),
    CaseOutcome::OrganAbsentEmptySelected(Candidate::Second),
    CaseOutcome::FlaggedAbsentNoEmpty,
    CaseOutcome::FlaggedInconsistent,
    CaseOutcome::FlaggedRejected,
    CaseOutcome::FlaggedUnparseable,
];

fn pair(case: &str, class: OrganClass, outcome: CaseOutcome) -> Verdict {
    Verdict::Pair(CaseVerdict {
        case_id: case.into(),
        class,
        outcome,
        dsc: Some(0.25),
        exchange_refs: vec![format!("{case}/{class}/presence")],
        timestamp_ms: 1,
    })
}

#[test]
fn every_verdict_kind_round_trips_through_the_store() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("verdicts.jsonl");
    let store = VerdictStore::open(&path).unwrap();
    let mut written = Vec::new();
    for (i, outcome) in ALL_OUTCOMES.into_iter().enumerate() {
        written.push(pair(&format!("c{i}"), OrganClass::Aorta, outcome));
    }
    for (i, outcome) in [
        QualityOutcome::Correct,
        QualityOutcome::Incorrect,
        QualityOutcome::FlaggedUnparseable,
    ]
    .into_iter()
    .enumerate()
    {
        written.push(Verdict::Single(QualityVerdict {
            case_id: format!("s{i}"),
            class: OrganClass::Stomach,
            outcome,
            exchange_refs: vec![],
            timestamp_ms: 2,
        }));
    }
    for (i, resolution) in Resolution::ALL.into_iter().enumerate() {
        written.push(Verdict::Override(OverrideVerdict {
            case_id: format!("c{i}"),
            class: OrganClass::Aorta,
            review_item: i as u64,
            resolution,
            note: "checked \"by hand\"".into(),
            reviewer: Some("r1".into()),
            timestamp_ms: 3,
        }));
    }
    for v in &written {
        store.record(v.clone()).unwrap();
    }
    let read: Vec<Verdict> = read_records(&path)
        .unwrap()
        .into_iter()
        .map(|r| r.verdict)
        .collect();
    assert_eq!(read, written);
    let reopened = VerdictStore::open(&path).unwrap();
    assert_eq!(
        reopened.verdicts().len() + reopened.overrides().len(),
        written.len()
    );
}

#[test]
fn later_verdict_supersedes() {
    let dir = tempfile::tempdir().unwrap();
    let store = VerdictStore::open(&dir.path().join("v.jsonl")).unwrap();
    store
        .record(pair("c1", OrganClass::Liver, CaseOutcome::FlaggedRejected))
        .unwrap();
    store
        .record(pair("c1", OrganClass::Liver, CaseOutcome::PreferFirst))
        .unwrap();
    assert_eq!(store.verdicts().len(), 1);
    assert_eq!(
        store
            .get("c1", OrganClass::Liver)
            .unwrap()
            .verdict
            .outcome_name(),
        "prefer_first"
    );
}

#[test]
fn self_as_truth_is_fully_accurate() {
    let mut verdicts = Vec::new();
    let mut truth = Vec::new();
    for (i, outcome) in ALL_OUTCOMES.into_iter().cycle().take(40).enumerate() {
        let case = format!("c{i}");
        let class = OrganClass::ALL[i % 8];
        if let Some(c) = outcome.selected() {
            truth.push(GroundTruthRecord {
                case_id: case.clone(),
                class,
                truth: if c == Candidate::First {
                    Truth::First
                } else {
                    Truth::Second
                },
            });
        }
        verdicts.push(pair(&case, class, outcome));
    }
    let table = compute_accuracy_table(&verdicts, &GroundTruth::new(truth).unwrap());
    let avg = table.average.unwrap();
    assert!(avg.evaluated > 0);
    assert_eq!(avg.correct, avg.evaluated);
    assert!(table.uncovered.is_empty());
}

#[test]
fn unmatched_verdicts_are_uncovered() {
    let verdicts = vec![
        pair("c1", OrganClass::Liver, CaseOutcome::PreferFirst),
        Verdict::Single(QualityVerdict {
            case_id: "c2".into(),
            class: OrganClass::Liver,
            outcome: QualityOutcome::Correct,
            exchange_refs: vec![],
            timestamp_ms: 0,
        }),
    ];
    let truth = GroundTruth::new([GroundTruthRecord {
        case_id: "c2".into(),
        class: OrganClass::Liver,
        truth: Truth::First,
    }])
    .unwrap();
    let table = compute_accuracy_table(&verdicts, &truth);
    assert_eq!(table.uncovered.len(), 2);
    assert_eq!(table.rows[0].evaluated, 0);
    assert_eq!(table.rows[0].render(), "-");
}

#[test]
fn truth_csv_round_trips_and_rejects_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("truth.csv");
    let records = vec![
        GroundTruthRecord {
            case_id: "a".into(),
            class: OrganClass::Kidneys,
            truth: Truth::Second,
        },
        GroundTruthRecord {
            case_id: "b".into(),
            class: OrganClass::Kidneys,
            truth: Truth::Incorrect,
        },
    ];
    GroundTruth::write_csv(&path, &records).unwrap();
    let truth = GroundTruth::load_csv(&path).unwrap();
    assert_eq!(truth.get("a", OrganClass::Kidneys), Some(Truth::Second));
    assert_eq!(truth.get("b", OrganClass::Kidneys), Some(Truth::Incorrect));
    std::fs::write(
        &path,
        "case_id,class,truth\na,liver,first\na,liver,second\n",
    )
    .unwrap();
    assert!(GroundTruth::load_csv(&path).is_err());
}

#[test]
fn exports() {
    let dir = tempfile::tempdir().unwrap();
    let empty = compute_accuracy_table(std::iter::empty(), &GroundTruth::default());
    let csv = dir.path().join("empty.csv");
    export_report(&empty, ReportFormat::Csv, &csv).unwrap();
    assert_eq!(
        std::fs::read_to_string(&csv).unwrap(),
        "class,correct,evaluated,accuracy\n"
    );

    let verdicts = [pair("c1", OrganClass::Spleen, CaseOutcome::PreferSecond)];
    let truth = GroundTruth::new([GroundTruthRecord {
        case_id: "c1".into(),
        class: OrganClass::Spleen,
        truth: Truth::Second,
    }])
    .unwrap();
    let table = compute_accuracy_table(&verdicts, &truth);
    let md = dir.path().join("one.md");
    export_report(&table, ReportFormat::Markdown, &md).unwrap();
    let text = std::fs::read_to_string(&md).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(
        rows,
        ["| spleen | 100.0 | 1/1 |", "| average | 100.0 | 1/1 |"]
    );
    assert!(export_report(
        &table,
        ReportFormat::Csv,
        &dir.path().join("missing/dir/x.csv")
    )
    .is_err());
}

proptest! {
    #[test]
    fn rendering_matches_decimal_rounding(correct in 0u64..5000, extra in 0u64..5000) {
        let evaluated = correct + extra;
        let cell = AccuracyCell { class: None, correct, evaluated };
        if evaluated == 0 {
            prop_assert_eq!(cell.render(), "-");
        } else {
            // Exact rational rounding half up, via i128 to avoid float ties.
            let num = 1000 * correct as i128;
            let q = (2 * num + evaluated as i128) / (2 * evaluated as i128);
            let expected = format!("{}.{}", q / 10, q % 10);
            prop_assert_eq!(cell.render(), expected);
            let acc = cell.accuracy().unwrap();
            prop_assert!((acc - 100.0 * correct as f64 / evaluated as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn average_pools_the_rows(counts in prop::collection::vec((0u64..50, 0u64..50), 1..8)) {
        let mut verdicts = Vec::new();
        let mut truth = Vec::new();
        for (k, (right, wrong)) in counts.iter().enumerate() {
            let class = OrganClass::ALL[k];
            for i in 0..(right + wrong) {
                let case = format!("{class}-{i}");
                verdicts.push(pair(&case, class, CaseOutcome::PreferFirst));
                truth.push(GroundTruthRecord {
                    case_id: case,
                    class,
                    truth: if i < *right { Truth::First } else { Truth::Second },
                });
            }
        }
        let table = compute_accuracy_table(&verdicts, &GroundTruth::new(truth).unwrap());
        let avg = table.average.unwrap();
        prop_assert_eq!(avg.correct, table.rows.iter().map(|r| r.correct).sum::<u64>());
        prop_assert_eq!(avg.evaluated, table.rows.iter().map(|r| r.evaluated).sum::<u64>());
        for (row, (right, wrong)) in table.rows.iter().zip(&counts) {
            prop_assert_eq!((row.correct, row.evaluated), (*right, right + wrong));
        }
    }
}
