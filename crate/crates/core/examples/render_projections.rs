//! Render the four images a reviewer sees for one case: the frontal CT
//! projection, red overlays of two candidate labels and the bone-window
//! skeleton reference.
//!
//! ```text
//! cargo run --example render_projections -- [out_dir]
//! ```

use labelqc::projection::{
    overlay_label, project_ct, project_label_mask, skeleton_projection, HuWindow,
};
use labelqc::synthetic::{corrupt, phantom_ct, Corruption, Ellipsoid, DEFAULT_DIMS};
use labelqc::OrganClass;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("labelqc-projections"));
    std::fs::create_dir_all(&out)?;

    let spleen = Ellipsoid {
        center: [33.0, 16.0, 44.0],
        radii: [4.5, 5.0, 6.0],
    };
    let ct = phantom_ct("demo", DEFAULT_DIMS, std::slice::from_ref(&spleen), 3);
    let good = spleen.label(OrganClass::Spleen, "good", DEFAULT_DIMS);
    let shifted = corrupt(&good, Corruption::Translate([-5, 0, -6]), "shifted");

    let ct_image = project_ct(&ct, HuWindow::CT);
    let images = [
        ("ct", ct_image.clone()),
        (
            "overlay_good",
            overlay_label(&ct_image, &project_label_mask(&good))?,
        ),
        (
            "overlay_shifted",
            overlay_label(&ct_image, &project_label_mask(&shifted))?,
        ),
        ("skeleton", skeleton_projection(&ct)),
    ];
    for (name, image) in images {
        let path = out.join(format!("{name}.png"));
        std::fs::write(&path, image.to_png())?;
        println!("{} ({}x{})", path.display(), image.width(), image.height());
    }
    Ok(())
}
