//! Print the prompt scripts sent for one comparison: the presence check,
//! the two-image comparison and its follow-up summary.
//!
//! ```text
//! cargo run --example prompt_scripts -- [class]
//! ```

use labelqc::projection::RgbImage;
use labelqc::prompt::{ProfileTable, PromptForge, PromptImage, PromptScript};
use labelqc::OrganClass;

fn show(title: &str, script: &PromptScript) {
    println!("=== {title} ({} images)", script.image_count());
    for turn in &script.turns {
        let names: Vec<&str> = turn.images.iter().map(|i| i.name()).collect();
        println!("[{:?}] {}", turn.role, turn.text);
        if !names.is_empty() {
            println!("    images: {}", names.join(", "));
        }
    }
    println!();
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let class: OrganClass = std::env::args()
        .nth(1)
        .as_deref()
        .unwrap_or("pancreas")
        .parse()?;
    let blank =
        |name: &str| PromptImage::encode(name, &RgbImage::new(4, 4, vec![0; 48]).expect("4x4 RGB"));
    let (skeleton, a, b) = (
        blank("skeleton.png"),
        blank("overlay_a.png"),
        blank("overlay_b.png"),
    );

    let profiles = ProfileTable::builtin();
    let profile = profiles.get(class);
    let forge = PromptForge::default();
    show(
        "presence",
        &forge.build_presence_script(profile, &skeleton)?,
    );
    let compare = forge.build_comparison_script(profile, &a, &b, &[])?;
    show("comparison", &compare);
    show(
        "summary",
        &forge.build_summary_script(&compare, "The second overlay covers the tail.", class)?,
    );
    show(
        "comparison, class-agnostic",
        &forge
            .clone()
            .class_agnostic("the structure")
            .build_comparison_script(profile, &a, &b, &[])?,
    );
    Ok(())
}
