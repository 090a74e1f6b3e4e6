//! Synthetic AIS tables and image features with threshold-separable class structure.
//!
//! Each class owns a box in (length, draught) space, so crisp threshold rules
//! separate clean data exactly. Image features are a per-class random template
//! plus per-vessel and per-image Gaussian noise. AIS noise jitters the reported
//! dimensions and, for a fraction of vessels, replaces them with the profile of
//! another class (a misconfigured transponder), which only the images can repair.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{self, AisStaticRecord, AisTable, ImageFeatureRecord, NffFile, NffWriter, FEATURE_DIMS};
use crate::error::{Error, Result};
use crate::provenance::Provenance;

/// Vessel counts of the five ship types in the reference corpus.
pub const IMBALANCED_VESSELS: [usize; 5] = [2412, 864, 53, 42, 32];
pub const IMBALANCED_TOTAL: usize = 3403;
const CLASS_NAMES: [&str; 5] = ["Cargo", "Tanker", "Other", "Passenger", "Tug"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassProfile {
    /// Equal vessel counts.
    Uniform,
    /// Vessel counts in the 2412/864/53/42/32 ratio (five classes only).
    Imbalanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub vessels: usize,
    pub classes: usize,
    /// Standard deviation of per-image feature noise; per-vessel noise is half of it.
    pub noise: f64,
    /// 0 gives clean AIS; 1 jitters length by 6 m and draught by 0.6 m (one sigma)
    /// and swaps the dimensions of 20% of vessels for another class's.
    pub ais_noise: f64,
    pub seed: u64,
    pub profile: ClassProfile,
    pub min_images: usize,
    pub max_images: usize,
    pub feature_dims: [usize; 3],
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            vessels: 500,
            classes: 5,
            noise: 1.0,
            ais_noise: 0.0,
            seed: 0,
            profile: ClassProfile::Uniform,
            min_images: 1,
            max_images: 5,
            feature_dims: FEATURE_DIMS,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidInput("at least 2 classes required".into()));
        }
        if self.profile == ClassProfile::Imbalanced && self.classes != 5 {
            return Err(Error::InvalidInput("the imbalanced profile defines exactly 5 classes".into()));
        }
        if self.vessels < self.classes {
            return Err(Error::InvalidInput(format!("{} vessels cannot cover {} classes", self.vessels, self.classes)));
        }
        if self.min_images == 0 || self.min_images > self.max_images {
            return Err(Error::InvalidInput("images per vessel must satisfy 1 <= min <= max".into()));
        }
        if !(self.noise >= 0.0 && self.ais_noise >= 0.0) {
            return Err(Error::InvalidInput("noise levels must be non-negative".into()));
        }
        Ok(())
    }
}

pub fn class_names(classes: usize) -> Vec<String> {
    (0..classes)
        .map(|c| CLASS_NAMES.get(c).map(|s| s.to_string()).unwrap_or_else(|| format!("Type{}", c + 1)))
        .collect()
}

/// Dimension box of one class: length range, draught range, beam/length ratio range.
#[derive(Debug, Clone, Copy)]
struct Archetype {
    length: (f64, f64),
    draught: (f64, f64),
    beam_ratio: (f64, f64),
}

fn archetype(c: usize) -> Archetype {
    let a = |l0, l1, d0, d1, b0, b1| Archetype { length: (l0, l1), draught: (d0, d1), beam_ratio: (b0, b1) };
    match c {
        0 => a(110.0, 200.0, 6.0, 10.9, 0.13, 0.17),
        1 => a(110.0, 200.0, 11.5, 16.0, 0.16, 0.19),
        2 => a(40.0, 75.0, 2.0, 4.4, 0.18, 0.24),
        3 => a(80.0, 105.0, 4.0, 7.0, 0.15, 0.2),
        4 => a(15.0, 35.0, 2.5, 6.0, 0.3, 0.4),
        k => {
            let base = 220.0 + 40.0 * (k - 5) as f64;
            a(base, base + 30.0, 8.0, 12.0, 0.14, 0.18)
        }
    }
}

/// Vessel counts per class.
pub fn class_counts(cfg: &SyntheticConfig) -> Vec<usize> {
    let weights: Vec<f64> = match cfg.profile {
        ClassProfile::Uniform => vec![1.0; cfg.classes],
        ClassProfile::Imbalanced => IMBALANCED_VESSELS.iter().map(|&v| v as f64).collect(),
    };
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / total * cfg.vessels as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| (e.floor() as usize).max(1)).collect();
    let mut order: Vec<usize> = (0..cfg.classes).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut k = 0;
    while counts.iter().sum::<usize>() < cfg.vessels {
        counts[order[k % cfg.classes]] += 1;
        k += 1;
    }
    while counts.iter().sum::<usize>() > cfg.vessels {
        let big = (0..cfg.classes).max_by_key(|&c| (counts[c], usize::MAX - c)).unwrap();
        counts[big] -= 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VesselTruth {
    pub mmsi: u64,
    pub class: usize,
    /// Dimensions were taken from another class's profile.
    pub swapped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub class_names: Vec<String>,
    pub vessels: Vec<VesselTruth>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub ais: AisTable,
    pub images: NffFile,
    pub truth: SyntheticTruth,
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    rng.random_range(lo..=hi)
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Reported dimensions for a vessel of archetype `a`, split into transceiver offsets.
fn dimensions<R: Rng>(rng: &mut R, a: Archetype, jitter: f64) -> [f64; 7] {
    let noise = |rng: &mut R, sd: f64| if sd > 0.0 { Normal::new(0.0, sd).unwrap().sample(rng) } else { 0.0 };
    let length = (uniform(rng, a.length) + noise(rng, 6.0 * jitter)).round().max(4.0);
    let draught = round1((uniform(rng, a.draught) + noise(rng, 0.6 * jitter)).max(0.2));
    let width = (length * uniform(rng, a.beam_ratio)).round().max(2.0);
    let to_bow = (length * rng.random_range(0.3..0.7)).round();
    let to_starboard = (width * rng.random_range(0.3..0.7)).round();
    [to_bow, length - to_bow, to_starboard, width - to_starboard, width, length, draught]
}

/// Generate a corpus. All randomness comes from one ChaCha8 stream seeded by `cfg.seed`.
pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let flen = data::nff::feature_len(cfg.feature_dims);
    let templates: Vec<Vec<f32>> =
        (0..cfg.classes).map(|_| (0..flen).map(|_| rng.sample::<f32, _>(StandardNormal)).collect()).collect();

    let counts = class_counts(cfg);
    let mut classes: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
    classes.shuffle(&mut rng);

    let names = class_names(cfg.classes);
    let swap_p = (0.2 * cfg.ais_noise).min(1.0);
    let vessel_sd = (cfg.noise * 0.5) as f32;
    let image_sd = cfg.noise as f32;
    let mut records = Vec::with_capacity(cfg.vessels);
    let mut truth = Vec::with_capacity(cfg.vessels);
    let mut images = Vec::new();
    let mut offset = vec![0f32; flen];
    for (i, &class) in classes.iter().enumerate() {
        let mmsi = 200_000_000 + i as u64;
        let swapped = swap_p > 0.0 && rng.random_bool(swap_p);
        let source = if swapped {
            let k = rng.random_range(0..cfg.classes - 1);
            if k >= class { k + 1 } else { k }
        } else {
            class
        };
        let dims = dimensions(&mut rng, archetype(source), cfg.ais_noise);
        records.push(AisStaticRecord::from_fields(mmsi, dims, names[class].clone()));
        truth.push(VesselTruth { mmsi, class, swapped });

        for o in offset.iter_mut() {
            *o = vessel_sd * rng.sample::<f32, _>(StandardNormal);
        }
        let n_img = rng.random_range(cfg.min_images..=cfg.max_images);
        for k in 0..n_img {
            let feature = templates[class]
                .iter()
                .zip(&offset)
                .map(|(&t, &o)| t + o + image_sd * rng.sample::<f32, _>(StandardNormal))
                .collect();
            let confidence = rng.random_range(0.7f32..=1.0);
            images.push(ImageFeatureRecord { image_id: format!("img-{mmsi}-{k}"), mmsi, confidence, feature });
        }
    }
    Ok(SyntheticCorpus {
        ais: AisTable::from_records(records),
        images: NffFile { dims: cfg.feature_dims, records: images },
        truth: SyntheticTruth { class_names: names, vessels: truth, provenance: Provenance::new(Some(cfg.seed), cfg) },
    })
}

pub const AIS_FILE: &str = "ais.csv";
pub const IMAGES_FILE: &str = "images.nff";
pub const TRUTH_FILE: &str = "truth.json";

/// Write `ais.csv`, `images.nff` and `truth.json` into `dir`.
pub fn write_corpus(dir: &Path, corpus: &SyntheticCorpus) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join(AIS_FILE);
    let f = fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
    data::write_ais_csv(BufWriter::new(f), &corpus.ais.records)?;

    let p = dir.join(IMAGES_FILE);
    let f = fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
    let mut w = NffWriter::new(BufWriter::new(f), corpus.images.dims, corpus.images.records.len())?;
    for r in &corpus.images.records {
        w.write(r)?;
    }
    w.finish()?;

    let p = dir.join(TRUTH_FILE);
    fs::write(&p, serde_json::to_string_pretty(&corpus.truth)?).map_err(|e| Error::io(&p, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(profile: ClassProfile, vessels: usize) -> SyntheticConfig {
        SyntheticConfig { vessels, profile, feature_dims: [4, 2, 2], ..Default::default() }
    }

    #[test]
    fn imbalanced_counts_follow_ratios() {
        let c = class_counts(&small(ClassProfile::Imbalanced, IMBALANCED_TOTAL));
        assert_eq!(c, IMBALANCED_VESSELS.to_vec());
        let c = class_counts(&small(ClassProfile::Imbalanced, 1000));
        assert_eq!(c.iter().sum::<usize>(), 1000);
        assert!(c[0] > c[1] && c[1] > c[2] && c[2] >= c[3] && c[3] >= c[4] && c[4] >= 1);
    }

    #[test]
    fn ais_additivity_and_bands() {
        let corpus = generate(&small(ClassProfile::Uniform, 200)).unwrap();
        for (r, t) in corpus.ais.records.iter().zip(&corpus.truth.vessels) {
            assert_eq!(r.to_bow + r.to_stern, r.length);
            assert_eq!(r.to_starboard + r.to_port, r.width);
            let a = archetype(t.class);
            assert!(r.length >= a.length.0.round() && r.length <= a.length.1.round());
            assert!(!t.swapped);
        }
        let per_vessel = corpus.images.records.len() as f64 / 200.0;
        assert!((1.0..=5.0).contains(&per_vessel));
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = small(ClassProfile::Uniform, 30);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_corpus(a.path(), &generate(&cfg).unwrap()).unwrap();
        write_corpus(b.path(), &generate(&cfg).unwrap()).unwrap();
        for f in [AIS_FILE, IMAGES_FILE, TRUTH_FILE] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        let c = generate(&SyntheticConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(c.ais.records, generate(&cfg).unwrap().ais.records);
    }

    #[test]
    fn ais_noise_swaps_some_vessels() {
        let cfg = SyntheticConfig { ais_noise: 1.0, ..small(ClassProfile::Uniform, 500) };
        let n = generate(&cfg).unwrap().truth.vessels.iter().filter(|v| v.swapped).count();
        assert!((60..=140).contains(&n), "{n}");
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(generate(&SyntheticConfig { classes: 1, ..Default::default() }).is_err());
        assert!(generate(&SyntheticConfig { classes: 4, profile: ClassProfile::Imbalanced, ..Default::default() }).is_err());
    }
}
