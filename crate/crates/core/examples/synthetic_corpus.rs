//! Generate a synthetic AIS + image-feature corpus, write it to disk, read it
//! back and join it into the image-centred and vessel-centred datasets.
//!
//! cargo run --example synthetic_corpus

use nfship::data::{build_image_centred, build_vessel_centred, load_ais_csv, read_nff_file};
use nfship::synthetic::{generate, write_corpus, ClassProfile, SyntheticConfig, AIS_FILE, IMAGES_FILE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SyntheticConfig {
        vessels: 300,
        ais_noise: 0.5,
        profile: ClassProfile::Imbalanced,
        feature_dims: [8, 7, 7],
        seed: 3,
        ..Default::default()
    };
    let corpus = generate(&cfg)?;
    let dir = tempfile::tempdir()?;
    write_corpus(dir.path(), &corpus)?;

    let ais = load_ais_csv(&dir.path().join(AIS_FILE))?;
    let images = read_nff_file(&dir.path().join(IMAGES_FILE))?;
    println!("{} AIS records, {} images of {:?}", ais.len(), images.records.len(), images.dims);
    let swapped = corpus.truth.vessels.iter().filter(|v| v.swapped).count();
    println!("{swapped} vessels report another class's dimensions");

    let (ic, report) = build_image_centred(&images, &ais);
    println!("image-centred: {} rows ({report:?})", ic.len());
    let (vc, _) = build_vessel_centred(&images, &ais);
    println!("vessel-centred: {} rows", vc.len());
    for (name, n) in vc.label_map.names().iter().zip(vc.class_counts()) {
        println!("  {name:<10} {n}");
    }
    Ok(())
}
