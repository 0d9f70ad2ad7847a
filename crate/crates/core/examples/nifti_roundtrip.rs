//! Write a phantom CT and label as gzipped NIfTI-1, read them back and
//! check that nothing was lost.
//!
//! ```text
//! cargo run --example nifti_roundtrip -- [dir]
//! ```

use labelqc::synthetic::{phantom_ct, Ellipsoid};
use labelqc::volume::{load_label_aligned, load_volume, write_label, write_volume};
use labelqc::OrganClass;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("labelqc-nifti"));
    std::fs::create_dir_all(&dir)?;

    let dims = [32, 24, 40];
    let liver = Ellipsoid {
        center: [11.0, 13.0, 26.0],
        radii: [6.0, 5.0, 6.0],
    };
    let ct = phantom_ct("demo", dims, std::slice::from_ref(&liver), 1);
    let label = liver.label(OrganClass::Liver, "demo_liver", dims);

    let ct_path = dir.join("demo.nii.gz");
    let label_path = dir.join("demo_liver.nii.gz");
    write_volume(&ct_path, &ct)?;
    write_label(&label_path, &label, &ct)?;

    let ct_back = load_volume(&ct_path)?;
    let label_back = load_label_aligned(&label_path, &ct_back, OrganClass::Liver)?;
    println!(
        "{}: dims {:?}, spacing {:?}",
        ct_path.display(),
        ct_back.dims(),
        ct_back.spacing()
    );
    println!("voxels identical: {}", ct_back.voxels() == ct.voxels());
    println!(
        "label voxels: {} written, {} read, identical: {}",
        label.foreground_count(),
        label_back.foreground_count(),
        label_back.mask() == label.mask()
    );
    Ok(())
}
