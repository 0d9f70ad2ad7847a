mod common;

use std::sync::Arc;

use common::{critic_with, phantom_pair, scripted};
use labelqc::critic::{CriticError, Workspace};
use labelqc::dsc::DscStats;
use labelqc::review::{FlagReason, ImageSlot};
use labelqc::verdict::{CaseOutcome, QualityOutcome};
use labelqc::volume::LabelVolume;
use labelqc::{Candidate, OrganClass};
use proptest::prelude::*;

const CLASS: OrganClass = OrganClass::Liver;

/// Threshold above any Dice, so every pair is compared.
fn always_compare() -> DscStats {
    DscStats::new(CLASS, 1.5, 0.0)
}

fn run_compare(answers: &[&str], swap: bool) -> (CaseOutcome, usize) {
    let (ct, good, bad) = phantom_pair("case", CLASS);
    let backend = scripted(answers);
    let critic = critic_with(backend.clone());
    let (y1, y2) = if swap { (&bad, &good) } else { (&good, &bad) };
    let v = critic
        .compare_case(&ct, y1, y2, critic.profile(CLASS), &always_compare())
        .unwrap();
    assert_eq!(v.exchange_refs.len(), backend.seen().len());
    (v.outcome, backend.seen().len())
}

#[test]
fn dual_confirmation_transitions() {
    let table = [
        ("first", "second", CaseOutcome::PreferFirst),
        ("first", "first", CaseOutcome::FlaggedInconsistent),
        ("second", "first", CaseOutcome::PreferSecond),
        ("second", "second", CaseOutcome::FlaggedInconsistent),
        (
            "Both labels appear incorrect.",
            "first",
            CaseOutcome::FlaggedRejected,
        ),
        (
            "second",
            "It depends on the slice.",
            CaseOutcome::FlaggedUnparseable,
        ),
    ];
    for (s1, s2, expected) in table {
        let (outcome, exchanges) =
            run_compare(&["Yes.", "Reasoning one.", s1, "Reasoning two.", s2], false);
        assert_eq!(outcome, expected, "answers ({s1:?}, {s2:?})");
        assert_eq!(exchanges, 5);
    }
}

#[test]
fn run_two_shows_the_images_swapped() {
    let (ct, good, bad) = phantom_pair("case", CLASS);
    let backend = scripted(&["Yes", "a", "first", "b", "second"]);
    let critic = critic_with(backend.clone());
    critic
        .compare_case(&ct, &good, &bad, critic.profile(CLASS), &always_compare())
        .unwrap();
    let seen = backend.seen();
    let run1: Vec<_> = seen[1].images().map(|i| i.png().to_vec()).collect();
    let run2: Vec<_> = seen[3].images().map(|i| i.png().to_vec()).collect();
    assert_eq!(run1.len(), 2);
    assert_ne!(run1[0], run1[1]);
    assert_eq!(run1[0], run2[1]);
    assert_eq!(run1[1], run2[0]);
    // The summary replays the comparison and the model's answer.
    assert_eq!(seen[2].turns.len(), seen[1].turns.len() + 2);
    assert_eq!(seen[2].turns[seen[1].turns.len()].text, "a");
}

#[test]
fn absent_organ_selects_the_empty_label() {
    let (ct, good, _) = phantom_pair("case", CLASS);
    let empty = LabelVolume::empty(CLASS, "empty", good.dims());
    let backend = scripted(&["No, it is not visible."]);
    let critic = critic_with(backend.clone());
    let v = critic
        .compare_case(&ct, &good, &empty, critic.profile(CLASS), &always_compare())
        .unwrap();
    assert_eq!(
        v.outcome,
        CaseOutcome::OrganAbsentEmptySelected(Candidate::Second)
    );
    assert_eq!(backend.seen().len(), 1);
}

#[test]
fn absent_organ_without_empty_candidate_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(dir.path()).unwrap();
    let (ct, good, bad) = phantom_pair("case7", CLASS);
    let critic = critic_with(scripted(&["No."])).with_review(ws.review.clone());
    let v = critic
        .compare_case(&ct, &good, &bad, critic.profile(CLASS), &always_compare())
        .unwrap();
    assert_eq!(v.outcome, CaseOutcome::FlaggedAbsentNoEmpty);
    let item = ws.review.find("case7", CLASS).unwrap();
    assert_eq!(item.flag_reason, FlagReason::AbsentNoEmpty);
    assert_eq!(
        item.images,
        [
            ImageSlot::Ct,
            ImageSlot::OverlayA,
            ImageSlot::OverlayB,
            ImageSlot::Skeleton
        ]
    );
    for slot in item.images {
        let png = ws.review.image(item.id, slot).unwrap();
        assert!(png.starts_with(b"\x89PNG"));
    }
}

#[test]
fn similar_pairs_are_skipped_without_prompts() {
    let (ct, good, bad) = phantom_pair("case", CLASS);
    let backend = scripted(&[]);
    let critic = critic_with(backend.clone());
    let dsc = critic.pair_dice(&good, &bad).unwrap();
    let v = critic
        .compare_case(
            &ct,
            &good,
            &bad,
            critic.profile(CLASS),
            &DscStats::new(CLASS, dsc, 0.0),
        )
        .unwrap();
    assert_eq!(v.outcome, CaseOutcome::SkippedSimilar);
    assert_eq!(v.dsc, Some(dsc));
    assert!(v.exchange_refs.is_empty());
    assert!(backend.seen().is_empty());
}

#[test]
fn blank_and_vague_answers_are_unparseable() {
    let (outcome, exchanges) = run_compare(&["Yes", "", "   "], false);
    assert_eq!(outcome, CaseOutcome::FlaggedUnparseable);
    assert_eq!(exchanges, 3);
    let (outcome, exchanges) = run_compare(&["Possibly."], false);
    assert_eq!(outcome, CaseOutcome::FlaggedUnparseable);
    assert_eq!(exchanges, 1);
}

#[test]
fn exchange_refs_name_each_step() {
    let (ct, good, bad) = phantom_pair("c42", CLASS);
    let critic = critic_with(scripted(&["Yes", "a", "first", "b", "second"]));
    let v = critic
        .compare_case(&ct, &good, &bad, critic.profile(CLASS), &always_compare())
        .unwrap();
    assert_eq!(
        v.exchange_refs,
        [
            "c42/liver/presence",
            "c42/liver/compare_ab",
            "c42/liver/summary_ab",
            "c42/liver/compare_ba",
            "c42/liver/summary_ba"
        ]
    );
}

#[test]
fn mismatched_inputs_are_rejected() {
    let (ct, good, bad) = phantom_pair("case", CLASS);
    let critic = critic_with(scripted(&[]));
    let spleen = critic.profile(OrganClass::Spleen);
    assert!(matches!(
        critic.compare_case(&ct, &good, &bad, spleen, &always_compare()),
        Err(CriticError::Precondition(_))
    ));
    let small = LabelVolume::empty(CLASS, "s", [2, 2, 2]);
    assert!(matches!(
        critic.compare_case(&ct, &good, &small, critic.profile(CLASS), &always_compare()),
        Err(CriticError::Precondition(_))
    ));
}

#[test]
fn gateway_failure_leaves_the_case_incomplete() {
    let (ct, good, bad) = phantom_pair("case", CLASS);
    let critic = critic_with(scripted(&["Yes"]));
    assert!(matches!(
        critic.compare_case(&ct, &good, &bad, critic.profile(CLASS), &always_compare()),
        Err(CriticError::Gateway(_))
    ));
}

#[test]
fn single_label_examples() {
    let (ct, good, _) = phantom_pair("case", CLASS);
    let empty = LabelVolume::empty(CLASS, "empty", good.dims());

    let critic = critic_with(scripted(&["No."]));
    let v = critic
        .assess_single_label(&ct, &empty, critic.profile(CLASS), &[])
        .unwrap();
    assert_eq!(v.outcome, QualityOutcome::Correct);

    let critic = critic_with(scripted(&["No."]));
    let v = critic
        .assess_single_label(&ct, &good, critic.profile(CLASS), &[])
        .unwrap();
    assert_eq!(v.outcome, QualityOutcome::Incorrect);

    let critic = critic_with(scripted(&["Yes", "It misses the left lobe.", "incorrect"]));
    let v = critic
        .assess_single_label(&ct, &good, critic.profile(CLASS), &[])
        .unwrap();
    assert_eq!(v.outcome, QualityOutcome::Incorrect);
    assert_eq!(v.exchange_refs.len(), 3);

    let critic = critic_with(scripted(&["Yes", "Looks right.", "Correct."]));
    let v = critic
        .assess_single_label(&ct, &good, critic.profile(CLASS), &[])
        .unwrap();
    assert_eq!(v.outcome, QualityOutcome::Correct);

    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(dir.path()).unwrap();
    let critic = critic_with(scripted(&["Yes", "Hmm.", "maybe"])).with_review(ws.review.clone());
    let v = critic
        .assess_single_label(&ct, &good, critic.profile(CLASS), &[])
        .unwrap();
    assert_eq!(v.outcome, QualityOutcome::FlaggedUnparseable);
    let item = ws.review.find("case", CLASS).unwrap();
    assert_eq!(
        item.images,
        [ImageSlot::Ct, ImageSlot::Overlay, ImageSlot::Skeleton]
    );
}

fn mirrored(o: CaseOutcome) -> CaseOutcome {
    match o {
        CaseOutcome::PreferFirst => CaseOutcome::PreferSecond,
        CaseOutcome::PreferSecond => CaseOutcome::PreferFirst,
        CaseOutcome::OrganAbsentEmptySelected(c) => {
            CaseOutcome::OrganAbsentEmptySelected(c.other())
        }
        other => other,
    }
}

fn summary_answer() -> impl Strategy<Value = &'static str> {
    prop::sample::select(vec![
        "first",
        "second",
        "The first one.",
        "Image 2",
        "Both are similar.",
        "Neither is right.",
        "unclear",
    ])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Swapping the candidates and replaying the answers per image order
    // mirrors the decision.
    #[test]
    fn outcome_follows_the_label_not_the_slot(s1 in summary_answer(), s2 in summary_answer()) {
        let (forward, _) = run_compare(&["Yes", "a", s1, "b", s2], false);
        let (swapped, _) = run_compare(&["Yes", "b", s2, "a", s1], true);
        prop_assert_eq!(swapped, mirrored(forward));
    }
}

#[test]
fn critic_is_shareable_across_threads() {
    fn assert_sync<T: Send + Sync>(_: &T) {}
    let critic = critic_with(Arc::new(labelqc::gateway::ScriptedBackend::default()));
    assert_sync(&critic);
}
