//! Prompt scripts for the three-step critique conversation:
//! organ presence check, label comparison (or single-label review), and a
//! one-word summary of the previous answer.
//!
//! Wording comes from a [`TemplateSet`]; per-class style from a
//! [`ProfileTable`]. Images are referenced in turn text by `<image>`
//! markers, matched in order to the turn's attached images.

pub mod profile;
pub mod template;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::class::OrganClass;
use crate::projection::RgbImage;

pub use profile::{ClassProfile, Familiarity, ProfileTable, Strictness, MAX_SHOTS};
pub use template::{count_images, render_template, TemplateSet, IMAGE_MARKER};

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("template configuration: {0}")]
    Config(String),
    #[error("unbound template placeholder {{{0}}}")]
    Unbound(String),
    #[error("script needs {needed} images but the endpoint accepts at most {limit}")]
    Capacity { needed: usize, limit: usize },
    #[error("{0} in-context examples given, at most 10 allowed")]
    TooManyExamples(usize),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("in-context example manifest line {line}: {reason}")]
    Examples { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// A PNG-encoded image attached to a prompt. Cloning shares the bytes.
#[derive(Clone, PartialEq, Eq)]
pub struct PromptImage {
    name: String,
    png: Arc<[u8]>,
}

impl PromptImage {
    pub fn encode(name: impl Into<String>, image: &RgbImage) -> Self {
        PromptImage {
            name: name.into(),
            png: image.to_png().into(),
        }
    }

    pub fn from_png(name: impl Into<String>, png: Vec<u8>) -> Self {
        PromptImage {
            name: name.into(),
            png: png.into(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn png(&self) -> &[u8] {
        &self.png
    }
}

impl fmt::Debug for PromptImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PromptImage({}, {} bytes)", self.name, self.png.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    pub role: Role,
    pub text: String,
    pub images: Vec<PromptImage>,
}

impl Turn {
    fn text(role: Role, text: impl Into<String>) -> Self {
        Turn {
            role,
            text: text.into(),
            images: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptKind {
    Presence,
    Comparison,
    SingleLabel,
    ComparisonSummary,
    SingleLabelSummary,
}

/// Position of a script in the per-case conversation; used to key
/// transcripts and scripted mock answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptStep {
    Presence,
    /// Comparison with the first candidate shown first.
    CompareAb,
    SummaryAb,
    /// Comparison repeated with the image order inverted.
    CompareBa,
    SummaryBa,
    Single,
    SummarySingle,
}

impl ScriptStep {
    pub fn as_str(self) -> &'static str {
        match self {
            ScriptStep::Presence => "presence",
            ScriptStep::CompareAb => "compare_ab",
            ScriptStep::SummaryAb => "summary_ab",
            ScriptStep::CompareBa => "compare_ba",
            ScriptStep::SummaryBa => "summary_ba",
            ScriptStep::Single => "single",
            ScriptStep::SummarySingle => "summary_single",
        }
    }
}

impl fmt::Display for ScriptStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScriptTag {
    pub case_id: String,
    pub class: OrganClass,
    pub step: ScriptStep,
}

impl ScriptTag {
    /// Stable identifier, also used as the transcript record id.
    pub fn record_id(&self) -> String {
        format!("{}/{}/{}", self.case_id, self.class, self.step)
    }
}

/// An ordered conversation ready to send.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptScript {
    pub kind: ScriptKind,
    pub turns: Vec<Turn>,
    pub tag: Option<ScriptTag>,
}

impl PromptScript {
    pub fn with_tag(mut self, tag: ScriptTag) -> Self {
        self.tag = Some(tag);
        self
    }

    pub fn image_count(&self) -> usize {
        self.turns.iter().map(|t| t.images.len()).sum()
    }

    /// All attached images in conversation order.
    pub fn images(&self) -> impl Iterator<Item = &PromptImage> {
        self.turns.iter().flat_map(|t| t.images.iter())
    }

    /// Every turn has exactly as many `<image>` markers as attachments.
    pub fn check_markers(&self) -> Result<(), PromptError> {
        for (i, t) in self.turns.iter().enumerate() {
            let n = count_images(&t.text);
            if n != t.images.len() {
                return Err(PromptError::Precondition(format!(
                    "turn {i} has {n} image markers but {} images",
                    t.images.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleVerdict {
    Correct,
    Incorrect,
}

impl ExampleVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            ExampleVerdict::Correct => "correct",
            ExampleVerdict::Incorrect => "incorrect",
        }
    }
}

/// An annotated overlay shown to the model as a worked example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InContextExample {
    pub image: PromptImage,
    pub verdict: ExampleVerdict,
    pub reason: String,
}

impl InContextExample {
    pub fn new(
        image: PromptImage,
        verdict: ExampleVerdict,
        reason: impl Into<String>,
    ) -> Result<Self, PromptError> {
        let reason = reason.into();
        if reason.trim().is_empty() {
            return Err(PromptError::Precondition(
                "example reason must not be empty".into(),
            ));
        }
        Ok(InContextExample {
            image,
            verdict,
            reason,
        })
    }
}

#[derive(Debug, Deserialize)]
struct ExampleRecord {
    class: OrganClass,
    image_path: std::path::PathBuf,
    verdict: ExampleVerdict,
    reason: String,
}

/// In-context examples per class, kept in manifest order.
#[derive(Debug, Clone, Default)]
pub struct ExampleLibrary {
    by_class: HashMap<OrganClass, Vec<InContextExample>>,
}

impl ExampleLibrary {
    /// Load a JSON-lines manifest of
    /// `{"class", "image_path", "verdict": "correct"|"incorrect", "reason"}`.
    /// Image paths are PNG files relative to the manifest's directory.
    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PromptError::Config(format!("examples {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut lib = ExampleLibrary::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| PromptError::Examples {
                line: n + 1,
                reason,
            };
            let rec: ExampleRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            let image_path = base.join(&rec.image_path);
            let png =
                fs::read(&image_path).map_err(|e| err(format!("{}: {e}", image_path.display())))?;
            RgbImage::from_png(&png).map_err(|e| err(e.to_string()))?;
            let name = image_path
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let example =
                InContextExample::new(PromptImage::from_png(name, png), rec.verdict, rec.reason)
                    .map_err(|e| err(e.to_string()))?;
            lib.push(rec.class, example);
        }
        Ok(lib)
    }

    pub fn push(&mut self, class: OrganClass, example: InContextExample) {
        self.by_class.entry(class).or_default().push(example);
    }

    /// Up to `n` examples for a class.
    pub fn take(&self, class: OrganClass, n: usize) -> &[InContextExample] {
        self.by_class
            .get(&class)
            .map(|v| &v[..n.min(v.len())])
            .unwrap_or(&[])
    }
}

/// Builds prompt scripts from templates and class profiles.
#[derive(Debug, Clone)]
pub struct PromptForge {
    templates: TemplateSet,
    class_agnostic: bool,
    generic_phrase: String,
    max_images: usize,
}

pub const DEFAULT_GENERIC_PHRASE: &str = "the annotated structure";
pub const DEFAULT_MAX_IMAGES: usize = 16;

impl Default for PromptForge {
    fn default() -> Self {
        PromptForge::new(TemplateSet::builtin())
    }
}

impl PromptForge {
    pub fn new(templates: TemplateSet) -> Self {
        PromptForge {
            templates,
            class_agnostic: false,
            generic_phrase: DEFAULT_GENERIC_PHRASE.to_string(),
            max_images: DEFAULT_MAX_IMAGES,
        }
    }

    /// Drop all class-specific wording, naming the target with `phrase`.
    pub fn class_agnostic(mut self, phrase: impl Into<String>) -> Self {
        self.class_agnostic = true;
        self.generic_phrase = phrase.into();
        self
    }

    pub fn with_max_images(mut self, max_images: usize) -> Self {
        self.max_images = max_images;
        self
    }

    pub fn is_class_agnostic(&self) -> bool {
        self.class_agnostic
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    fn organ_name(&self, profile: &ClassProfile) -> String {
        if self.class_agnostic {
            self.generic_phrase.clone()
        } else {
            profile.class.to_string()
        }
    }

    fn guidance(&self, profile: &ClassProfile) -> Result<String, PromptError> {
        let organ = self.organ_name(profile);
        if self.class_agnostic {
            let b = BTreeMap::from([("organ", organ)]);
            return render_template(self.templates.required("guidance/agnostic"), &b);
        }
        let b = BTreeMap::from([
            ("organ", organ),
            ("description", profile.description.clone()),
            (
                "strictness",
                self.templates
                    .required(profile.strictness.template_key())
                    .to_string(),
            ),
        ]);
        render_template(
            self.templates.required(profile.familiarity.template_key()),
            &b,
        )
    }

    fn shots_block(&self, examples: &[InContextExample]) -> Result<String, PromptError> {
        let mut blocks = Vec::with_capacity(examples.len());
        for (i, ex) in examples.iter().enumerate() {
            let b = BTreeMap::from([
                ("index", (i + 1).to_string()),
                ("verdict", ex.verdict.as_str().to_string()),
                ("reason", ex.reason.clone()),
            ]);
            blocks.push(render_template(self.templates.required("shot"), &b)?);
        }
        Ok(blocks.join("\n"))
    }

    fn check_capacity(&self, needed: usize) -> Result<(), PromptError> {
        if needed > self.max_images {
            return Err(PromptError::Capacity {
                needed,
                limit: self.max_images,
            });
        }
        Ok(())
    }

    fn system_turn(&self) -> Turn {
        Turn::text(Role::System, self.templates.required("system"))
    }

    fn finish(&self, kind: ScriptKind, turns: Vec<Turn>) -> Result<PromptScript, PromptError> {
        let script = PromptScript {
            kind,
            turns,
            tag: None,
        };
        self.check_capacity(script.image_count())?;
        script.check_markers()?;
        Ok(script)
    }

    /// Step 1: should the organ appear in this scan at all?
    pub fn build_presence_script(
        &self,
        profile: &ClassProfile,
        skeleton: &PromptImage,
    ) -> Result<PromptScript, PromptError> {
        let b = BTreeMap::from([("organ", self.organ_name(profile))]);
        let text = render_template(
            self.templates
                .step("presence", profile.class, self.class_agnostic),
            &b,
        )?;
        let user = Turn {
            role: Role::User,
            text,
            images: vec![skeleton.clone()],
        };
        self.finish(ScriptKind::Presence, vec![self.system_turn(), user])
    }

    fn labelled_script(
        &self,
        step: &str,
        kind: ScriptKind,
        profile: &ClassProfile,
        candidates: &[&PromptImage],
        examples: &[InContextExample],
    ) -> Result<PromptScript, PromptError> {
        if examples.len() > MAX_SHOTS {
            return Err(PromptError::TooManyExamples(examples.len()));
        }
        self.check_capacity(examples.len() + candidates.len())?;
        let b = BTreeMap::from([
            ("organ", self.organ_name(profile)),
            ("guidance", self.guidance(profile)?),
            ("shots_block", self.shots_block(examples)?),
        ]);
        let text = render_template(
            self.templates
                .step(step, profile.class, self.class_agnostic),
            &b,
        )?;
        let images = examples
            .iter()
            .map(|e| e.image.clone())
            .chain(candidates.iter().map(|c| (*c).clone()))
            .collect();
        let user = Turn {
            role: Role::User,
            text,
            images,
        };
        self.finish(kind, vec![self.system_turn(), user])
    }

    /// Step 2 (pairwise): which of two overlays is more correct. The
    /// first image argument is presented as the "first image".
    pub fn build_comparison_script(
        &self,
        profile: &ClassProfile,
        overlay_a: &PromptImage,
        overlay_b: &PromptImage,
        examples: &[InContextExample],
    ) -> Result<PromptScript, PromptError> {
        self.labelled_script(
            "compare",
            ScriptKind::Comparison,
            profile,
            &[overlay_a, overlay_b],
            examples,
        )
    }

    /// Step 2 (single label): is this overlay correct.
    pub fn build_single_label_script(
        &self,
        profile: &ClassProfile,
        overlay: &PromptImage,
        examples: &[InContextExample],
    ) -> Result<PromptScript, PromptError> {
        self.labelled_script(
            "single",
            ScriptKind::SingleLabel,
            profile,
            &[overlay],
            examples,
        )
    }

    /// Step 3: the prior conversation plus the model's answer, followed by a
    /// request for a one-word summary.
    pub fn build_summary_script(
        &self,
        prior: &PromptScript,
        answer: &str,
        class: OrganClass,
    ) -> Result<PromptScript, PromptError> {
        if answer.trim().is_empty() {
            return Err(PromptError::Precondition(
                "prior exchange has no answer to summarize".into(),
            ));
        }
        let (key, kind) = match prior.kind {
            ScriptKind::Comparison => ("summary/compare", ScriptKind::ComparisonSummary),
            ScriptKind::SingleLabel => ("summary/single", ScriptKind::SingleLabelSummary),
            other => {
                return Err(PromptError::Precondition(format!(
                    "cannot summarize a {other:?} script"
                )))
            }
        };
        let organ = if self.class_agnostic {
            self.generic_phrase.clone()
        } else {
            format!("{class}")
        };
        let text = render_template(
            self.templates.required(key),
            &BTreeMap::from([("organ", organ)]),
        )?;
        let mut turns = prior.turns.clone();
        turns.push(Turn::text(Role::Assistant, answer));
        turns.push(Turn::text(Role::User, text));
        self.finish(kind, turns)
    }
}
