//! Seed a review queue with three flagged cases and serve it over HTTP.
//!
//! ```text
//! cargo run --example review_server -- [addr]
//! curl localhost:8087/review/items
//! curl -X POST localhost:8087/review/items/1/resolution \
//!      -H 'content-type: application/json' -d '{"resolution":"second_best","note":"tip missing"}'
//! ```

use labelqc::critic::Workspace;
use labelqc::projection::{
    overlay_label, project_ct, project_label_mask, skeleton_projection, HuWindow,
};
use labelqc::review::{serve, FlagReason, ImageSlot, ReviewDraft, ReviewService};
use labelqc::synthetic::{generate_batch, DEFAULT_DIMS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let addr = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "127.0.0.1:8087".into())
        .parse()?;
    let dir = std::env::temp_dir().join("labelqc-review-demo");
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    let workspace = Workspace::open(&dir)?;

    let reasons = [
        FlagReason::Inconsistent,
        FlagReason::Rejected,
        FlagReason::Unparseable,
    ];
    for (case, reason) in generate_batch(3, 11, DEFAULT_DIMS).iter().zip(reasons) {
        let ct = project_ct(&case.ct, HuWindow::CT);
        let overlay = |i: usize| {
            overlay_label(&ct, &project_label_mask(&case.candidates[i])).map(|o| o.to_png())
        };
        let item = workspace.review.enqueue(ReviewDraft {
            case_id: case.case_id.clone(),
            class: case.class,
            flag_reason: reason,
            images: vec![
                (ImageSlot::Ct, ct.to_png()),
                (ImageSlot::OverlayA, overlay(0)?),
                (ImageSlot::OverlayB, overlay(1)?),
                (ImageSlot::Skeleton, skeleton_projection(&case.ct).to_png()),
            ],
        })?;
        println!(
            "queued item {} ({} / {})",
            item.id, item.case_id, item.class
        );
    }

    println!("serving {} on http://{addr}; ctrl-c to stop", dir.display());
    let service = ReviewService {
        store: workspace.review.clone(),
        token: None,
    };
    tokio::runtime::Runtime::new()?.block_on(serve(addr, service))?;
    println!(
        "overrides recorded: {}",
        workspace.verdicts.overrides().len()
    );
    Ok(())
}
