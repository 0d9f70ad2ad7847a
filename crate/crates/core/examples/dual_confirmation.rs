//! Run one comparison against a rule-based critic that always prefers the
//! overlay with more red pixels, and show every exchange.
//!
//! ```text
//! cargo run --example dual_confirmation
//! ```

use std::sync::Arc;

use labelqc::critic::Critic;
use labelqc::dsc::DscStats;
use labelqc::gateway::{EndpointConfig, FnBackend, Gateway};
use labelqc::prompt::{PromptScript, ScriptKind};
use labelqc::synthetic::{corrupt, phantom_ct, Corruption, Ellipsoid};
use labelqc::OrganClass;

fn red_pixels(png: &[u8]) -> usize {
    let img = labelqc::projection::RgbImage::from_png(png).expect("critic receives PNGs");
    img.data()
        .chunks_exact(3)
        .filter(|p| p[0] > 0 && p[1] == 0 && p[2] == 0)
        .count()
}

fn critic_answer(script: &PromptScript) -> String {
    match script.kind {
        ScriptKind::Presence => "Yes, it should be visible.".into(),
        ScriptKind::Comparison => {
            let counts: Vec<usize> = script.images().map(|i| red_pixels(i.png())).collect();
            // The two candidate overlays are the last images in the script.
            let [a, b] = counts[counts.len() - 2..] else {
                unreachable!()
            };
            if a >= b {
                "The first overlay covers more of the organ."
            } else {
                "The second one is fuller."
            }
            .into()
        }
        _ => {
            let prior = &script.turns[script.turns.len() - 2].text;
            if prior.contains("first") {
                "first"
            } else {
                "second"
            }
            .into()
        }
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dims = [40, 32, 48];
    let kidney = Ellipsoid {
        center: [27.0, 11.0, 24.0],
        radii: [4.0, 4.0, 7.0],
    };
    let ct = phantom_ct("demo", dims, std::slice::from_ref(&kidney), 5);
    let full = kidney.label(OrganClass::Kidneys, "full", dims);
    let truncated = corrupt(
        &full,
        Corruption::Truncate { axis: 2, keep: 0.4 },
        "truncated",
    );

    let backend = Arc::new(FnBackend(|s: &PromptScript| Ok(critic_answer(s))));
    let critic = Critic::new(Gateway::new(backend, EndpointConfig::default()));
    let stats = DscStats::new(OrganClass::Kidneys, 0.95, 0.02);
    let profile = critic.profile(OrganClass::Kidneys);

    for (name, y1, y2) in [
        ("full first", &full, &truncated),
        ("truncated first", &truncated, &full),
    ] {
        let verdict = critic.compare_case(&ct, y1, y2, profile, &stats)?;
        println!(
            "{name}: dice {:.3} -> {:?} via {}",
            verdict.dsc.unwrap_or(f64::NAN),
            verdict.outcome,
            verdict.exchange_refs.join(", ")
        );
    }
    Ok(())
}
