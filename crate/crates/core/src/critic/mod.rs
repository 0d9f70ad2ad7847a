//! Per-case decision flow and the dataset runner.
//!
//! A comparison goes: project and gate on Dice, ask whether the organ
//! should be visible at all, then compare the two overlays twice with the
//! image order swapped. The pair is only decided when both runs pick the
//! same label.

pub mod config;
pub mod run;

use std::sync::Arc;

use crate::class::{Candidate, OrganClass};
use crate::dsc::{dice, dice_projected, should_compare, DiceSpace, DscError, DscStats};
use crate::gateway::{
    parse_choice, parse_correctness, parse_presence, Gateway, GatewayError, ParsedChoice,
};
use crate::projection::{
    overlay_label, project_ct, project_label_mask, skeleton_projection, HuWindow, ProjectionError,
};
use crate::prompt::{
    ClassProfile, ExampleLibrary, InContextExample, ProfileTable, PromptError, PromptForge,
    PromptImage, PromptScript, ScriptStep, ScriptTag,
};
use crate::review::{FlagReason, ImageSlot, ReviewDraft, ReviewError, ReviewStore};
use crate::verdict::{now_ms, CaseOutcome, CaseVerdict, QualityOutcome, QualityVerdict};
use crate::volume::{LabelVolume, VoxelVolume};

pub use config::RunConfig;
pub use run::{
    compute_thresholds, run_dataset, CaseFailure, RunOptions, RunSummary, ThresholdPass, Workspace,
};

#[derive(Debug, thiserror::Error)]
pub enum CriticError {
    /// Retries exhausted or the request could not be sent; the case stays
    /// incomplete and is picked up again on the next run.
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Dsc(#[from] DscError),
    #[error(transparent)]
    Review(#[from] ReviewError),
    #[error(transparent)]
    Volume(#[from] crate::volume::VolumeError),
    #[error(transparent)]
    Manifest(#[from] crate::volume::ManifestError),
    #[error(transparent)]
    Verdict(#[from] crate::verdict::VerdictError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("precondition failed: {0}")]
    Precondition(String),
}

/// Combine the two comparison runs at label level. Run 1 shows the first
/// candidate first; run 2 shows it second.
pub fn dual_confirmation(run1: ParsedChoice, run2: ParsedChoice) -> CaseOutcome {
    use ParsedChoice::{First, Reject, Second};
    if run1 == Reject || run2 == Reject {
        return CaseOutcome::FlaggedRejected;
    }
    let label1 = match run1 {
        First => Candidate::First,
        Second => Candidate::Second,
        _ => return CaseOutcome::FlaggedUnparseable,
    };
    let label2 = match run2 {
        First => Candidate::Second,
        Second => Candidate::First,
        _ => return CaseOutcome::FlaggedUnparseable,
    };
    match (label1 == label2, label1) {
        (true, Candidate::First) => CaseOutcome::PreferFirst,
        (true, Candidate::Second) => CaseOutcome::PreferSecond,
        (false, _) => CaseOutcome::FlaggedInconsistent,
    }
}

fn flag_reason(outcome: CaseOutcome) -> Option<FlagReason> {
    match outcome {
        CaseOutcome::FlaggedAbsentNoEmpty => Some(FlagReason::AbsentNoEmpty),
        CaseOutcome::FlaggedInconsistent => Some(FlagReason::Inconsistent),
        CaseOutcome::FlaggedRejected => Some(FlagReason::Rejected),
        CaseOutcome::FlaggedUnparseable => Some(FlagReason::Unparseable),
        _ => None,
    }
}

/// Drives prompts through the gateway and turns answers into verdicts.
pub struct Critic {
    gateway: Gateway,
    forge: PromptForge,
    profiles: ProfileTable,
    examples: ExampleLibrary,
    shots: Option<usize>,
    dice_space: DiceSpace,
    review: Option<Arc<ReviewStore>>,
}

struct Conversation<'a> {
    case_id: &'a str,
    class: OrganClass,
    refs: Vec<String>,
}

impl Critic {
    pub fn new(gateway: Gateway) -> Self {
        Critic {
            gateway,
            forge: PromptForge::default(),
            profiles: ProfileTable::builtin(),
            examples: ExampleLibrary::default(),
            shots: None,
            dice_space: DiceSpace::default(),
            review: None,
        }
    }

    pub fn with_forge(mut self, forge: PromptForge) -> Self {
        self.forge = forge;
        self
    }

    pub fn with_profiles(mut self, profiles: ProfileTable) -> Self {
        self.profiles = profiles;
        self
    }

    pub fn with_examples(mut self, examples: ExampleLibrary) -> Self {
        self.examples = examples;
        self
    }

    /// Use `n` in-context examples for every class instead of each
    /// profile's default.
    pub fn with_shots(mut self, n: usize) -> Self {
        self.shots = Some(n);
        self
    }

    pub fn with_dice_space(mut self, space: DiceSpace) -> Self {
        self.dice_space = space;
        self
    }

    /// Enqueue flagged cases here.
    pub fn with_review(mut self, review: Arc<ReviewStore>) -> Self {
        self.review = Some(review);
        self
    }

    pub fn profiles(&self) -> &ProfileTable {
        &self.profiles
    }

    pub fn profile(&self, class: OrganClass) -> &ClassProfile {
        self.profiles.get(class)
    }

    pub fn dice_space(&self) -> DiceSpace {
        self.dice_space
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    /// In-context examples for a class, honouring the shot override.
    pub fn examples_for(&self, profile: &ClassProfile) -> &[InContextExample] {
        self.examples
            .take(profile.class, self.shots.unwrap_or(profile.default_shots))
    }

    /// Dice of a candidate pair in the configured space.
    pub fn pair_dice(&self, y1: &LabelVolume, y2: &LabelVolume) -> Result<f64, CriticError> {
        Ok(crate::dsc::pair_dice(y1, y2, self.dice_space)?)
    }

    fn ask(
        &self,
        conv: &mut Conversation<'_>,
        script: PromptScript,
        step: ScriptStep,
    ) -> Result<String, CriticError> {
        let script = script.with_tag(ScriptTag {
            case_id: conv.case_id.to_string(),
            class: conv.class,
            step,
        });
        let exchange = self.gateway.send(&script)?;
        conv.refs.push(exchange.record_id);
        Ok(exchange.raw_response)
    }

    /// Steps 2 and 3 for one image order.
    fn comparison_run(
        &self,
        conv: &mut Conversation<'_>,
        profile: &ClassProfile,
        shown_first: &PromptImage,
        shown_second: &PromptImage,
        examples: &[InContextExample],
        steps: (ScriptStep, ScriptStep),
    ) -> Result<ParsedChoice, CriticError> {
        let script =
            self.forge
                .build_comparison_script(profile, shown_first, shown_second, examples)?;
        let answer = self.ask(conv, script.clone(), steps.0)?;
        if answer.trim().is_empty() {
            return Ok(ParsedChoice::Unparseable);
        }
        let summary = self
            .forge
            .build_summary_script(&script, &answer, profile.class)?;
        Ok(parse_choice(&self.ask(conv, summary, steps.1)?))
    }

    fn check_inputs(
        &self,
        ct: &VoxelVolume,
        labels: &[&LabelVolume],
        profile: &ClassProfile,
    ) -> Result<(), CriticError> {
        for y in labels {
            if y.dims() != ct.dims() {
                return Err(CriticError::Precondition(format!(
                    "label {} has dims {:?}, volume has {:?}",
                    y.source_id(),
                    y.dims(),
                    ct.dims()
                )));
            }
            if y.class() != profile.class {
                return Err(CriticError::Precondition(format!(
                    "label {} is {}, profile is {}",
                    y.source_id(),
                    y.class(),
                    profile.class
                )));
            }
        }
        Ok(())
    }

    fn enqueue(
        &self,
        case_id: &str,
        class: OrganClass,
        reason: FlagReason,
        images: Vec<(ImageSlot, &PromptImage)>,
    ) -> Result<(), CriticError> {
        if let Some(review) = &self.review {
            review.enqueue(ReviewDraft {
                case_id: case_id.to_string(),
                class,
                flag_reason: reason,
                images: images
                    .into_iter()
                    .map(|(s, i)| (s, i.png().to_vec()))
                    .collect(),
            })?;
        }
        Ok(())
    }

    /// Pick the better of two candidate labels for `ct`, or flag the case.
    pub fn compare_case(
        &self,
        ct: &VoxelVolume,
        y1: &LabelVolume,
        y2: &LabelVolume,
        profile: &ClassProfile,
        stats: &DscStats,
    ) -> Result<CaseVerdict, CriticError> {
        self.check_inputs(ct, &[y1, y2], profile)?;
        let class = profile.class;
        let mut conv = Conversation {
            case_id: ct.id(),
            class,
            refs: Vec::new(),
        };
        let mask_a = project_label_mask(y1);
        let mask_b = project_label_mask(y2);
        let dsc = match self.dice_space {
            DiceSpace::Projected => dice_projected(&mask_a, &mask_b)?,
            DiceSpace::Volumetric => dice(y1.mask(), y2.mask())?,
        };
        let verdict = |outcome, refs| CaseVerdict {
            case_id: ct.id().to_string(),
            class,
            outcome,
            dsc: Some(dsc),
            exchange_refs: refs,
            timestamp_ms: now_ms(),
        };
        if !should_compare(dsc, stats) {
            return Ok(verdict(CaseOutcome::SkippedSimilar, Vec::new()));
        }

        let ct_image = project_ct(ct, HuWindow::CT);
        let ct_png = PromptImage::encode("ct.png", &ct_image);
        let overlay_a = PromptImage::encode("overlay_a.png", &overlay_label(&ct_image, &mask_a)?);
        let overlay_b = PromptImage::encode("overlay_b.png", &overlay_label(&ct_image, &mask_b)?);
        let skeleton = PromptImage::encode("skeleton.png", &skeleton_projection(ct));

        let presence = self.forge.build_presence_script(profile, &skeleton)?;
        let outcome = match parse_presence(&self.ask(&mut conv, presence, ScriptStep::Presence)?) {
            ParsedChoice::No => match (y1.is_empty(), y2.is_empty()) {
                (true, false) => CaseOutcome::OrganAbsentEmptySelected(Candidate::First),
                (false, true) => CaseOutcome::OrganAbsentEmptySelected(Candidate::Second),
                _ => CaseOutcome::FlaggedAbsentNoEmpty,
            },
            ParsedChoice::Yes => {
                let examples = self.examples_for(profile);
                let run1 = self.comparison_run(
                    &mut conv,
                    profile,
                    &overlay_a,
                    &overlay_b,
                    examples,
                    (ScriptStep::CompareAb, ScriptStep::SummaryAb),
                )?;
                let run2 = self.comparison_run(
                    &mut conv,
                    profile,
                    &overlay_b,
                    &overlay_a,
                    examples,
                    (ScriptStep::CompareBa, ScriptStep::SummaryBa),
                )?;
                dual_confirmation(run1, run2)
            }
            _ => CaseOutcome::FlaggedUnparseable,
        };
        if let Some(reason) = flag_reason(outcome) {
            self.enqueue(
                ct.id(),
                class,
                reason,
                vec![
                    (ImageSlot::Ct, &ct_png),
                    (ImageSlot::OverlayA, &overlay_a),
                    (ImageSlot::OverlayB, &overlay_b),
                    (ImageSlot::Skeleton, &skeleton),
                ],
            )?;
        }
        Ok(verdict(outcome, conv.refs))
    }

    /// Judge a single label as correct or incorrect; no Dice gate and no
    /// order swap.
    pub fn assess_single_label(
        &self,
        ct: &VoxelVolume,
        y: &LabelVolume,
        profile: &ClassProfile,
        examples: &[InContextExample],
    ) -> Result<QualityVerdict, CriticError> {
        self.check_inputs(ct, &[y], profile)?;
        let class = profile.class;
        let mut conv = Conversation {
            case_id: ct.id(),
            class,
            refs: Vec::new(),
        };
        let ct_image = project_ct(ct, HuWindow::CT);
        let ct_png = PromptImage::encode("ct.png", &ct_image);
        let overlay = PromptImage::encode(
            "overlay.png",
            &overlay_label(&ct_image, &project_label_mask(y))?,
        );
        let skeleton = PromptImage::encode("skeleton.png", &skeleton_projection(ct));

        let presence = self.forge.build_presence_script(profile, &skeleton)?;
        let outcome = match parse_presence(&self.ask(&mut conv, presence, ScriptStep::Presence)?) {
            ParsedChoice::No if y.is_empty() => QualityOutcome::Correct,
            ParsedChoice::No => QualityOutcome::Incorrect,
            ParsedChoice::Yes => {
                let script = self
                    .forge
                    .build_single_label_script(profile, &overlay, examples)?;
                let answer = self.ask(&mut conv, script.clone(), ScriptStep::Single)?;
                if answer.trim().is_empty() {
                    QualityOutcome::FlaggedUnparseable
                } else {
                    let summary = self.forge.build_summary_script(&script, &answer, class)?;
                    match parse_correctness(&self.ask(
                        &mut conv,
                        summary,
                        ScriptStep::SummarySingle,
                    )?) {
                        ParsedChoice::Yes => QualityOutcome::Correct,
                        ParsedChoice::No => QualityOutcome::Incorrect,
                        _ => QualityOutcome::FlaggedUnparseable,
                    }
                }
            }
            _ => QualityOutcome::FlaggedUnparseable,
        };
        if outcome == QualityOutcome::FlaggedUnparseable {
            self.enqueue(
                ct.id(),
                class,
                FlagReason::Unparseable,
                vec![
                    (ImageSlot::Ct, &ct_png),
                    (ImageSlot::Overlay, &overlay),
                    (ImageSlot::Skeleton, &skeleton),
                ],
            )?;
        }
        Ok(QualityVerdict {
            case_id: ct.id().to_string(),
            class,
            outcome,
            exchange_refs: conv.refs,
            timestamp_ms: now_ms(),
        })
    }
}
