//! Image-centred and vessel-centred datasets, class filtering, splitting and persistence.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ais::{AisTable, AisVector};
use super::nff::{self, feature_len, ImageFeatureRecord, NffFile};
use crate::error::{Error, Result};
use crate::provenance::{sha256_hex, Provenance};

/// Ship types in their conventional display order; other labels sort after these by name.
pub const KNOWN_SHIP_TYPES: [&str; 5] = ["Cargo", "Tanker", "Other", "Passenger", "Tug"];

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FEATURES_FILE: &str = "features.nff";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    /// One row per image.
    Ic,
    /// One row per vessel, features averaged over its images.
    Vc,
}

/// Class names indexed by label.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelMap {
    names: Vec<String>,
}

impl LabelMap {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate class name {n:?}")));
            }
        }
        Ok(LabelMap { names })
    }

    /// Label map over the distinct observed names, in canonical order.
    pub fn from_observed<'a>(names: impl IntoIterator<Item = &'a str>) -> Self {
        let mut distinct: Vec<&str> = names.into_iter().collect();
        distinct.sort_by_key(|n| (KNOWN_SHIP_TYPES.iter().position(|k| k == n).unwrap_or(usize::MAX), *n));
        distinct.dedup();
        LabelMap { names: distinct.into_iter().map(String::from).collect() }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, label: usize) -> &str {
        &self.names[label]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Everything about a dataset row except its feature array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowMeta {
    pub mmsi: u64,
    pub label: usize,
    pub ais: AisVector,
    pub confidence: f32,
    /// Source image ids: one for IC rows, all averaged images for VC rows.
    pub images: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub feature_dims: [usize; 3],
    pub label_map: LabelMap,
    pub rows: Vec<RowMeta>,
    features: Vec<f32>,
}

/// Join accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinReport {
    pub images: usize,
    pub unmatched_images: usize,
    pub rows: usize,
}

impl Dataset {
    pub fn new(
        kind: DatasetKind,
        feature_dims: [usize; 3],
        label_map: LabelMap,
        rows: Vec<RowMeta>,
        features: Vec<f32>,
    ) -> Result<Self> {
        let flen = feature_len(feature_dims);
        if features.len() != rows.len() * flen {
            return Err(Error::InvalidInput(format!(
                "{} feature values for {} rows of {flen}",
                features.len(),
                rows.len()
            )));
        }
        if let Some(r) = rows.iter().find(|r| r.label >= label_map.len()) {
            return Err(Error::InvalidInput(format!("label {} outside {} classes", r.label, label_map.len())));
        }
        Ok(Dataset { kind, feature_dims, label_map, rows, features })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.label_map.len()
    }

    pub fn feature_len(&self) -> usize {
        feature_len(self.feature_dims)
    }

    pub fn feature(&self, row: usize) -> &[f32] {
        let n = self.feature_len();
        &self.features[row * n..(row + 1) * n]
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn ais(&self) -> Vec<AisVector> {
        self.rows.iter().map(|r| r.ais).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.label).collect()
    }

    /// Rows per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes()];
        for r in &self.rows {
            c[r.label] += 1;
        }
        c
    }

    /// Distinct vessels per class.
    pub fn vessel_counts(&self) -> Vec<usize> {
        let mut sets = vec![std::collections::HashSet::new(); self.n_classes()];
        for r in &self.rows {
            sets[r.label].insert(r.mmsi);
        }
        sets.iter().map(|s| s.len()).collect()
    }

    /// New dataset holding `indices` in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let n = self.feature_len();
        let mut features = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            features.extend_from_slice(self.feature(i));
        }
        Dataset {
            kind: self.kind,
            feature_dims: self.feature_dims,
            label_map: self.label_map.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            features,
        }
    }
}

/// Inner join of images with table A on mmsi, one row per matched image.
pub fn build_image_centred(images: &NffFile, ais: &AisTable) -> (Dataset, JoinReport) {
    let by_mmsi: HashMap<u64, usize> = ais.records.iter().enumerate().map(|(i, r)| (r.mmsi, i)).collect();
    let matched: Vec<(&ImageFeatureRecord, usize)> = images
        .records
        .iter()
        .filter_map(|img| by_mmsi.get(&img.mmsi).map(|&a| (img, a)))
        .collect();
    let label_map = LabelMap::from_observed(matched.iter().map(|(_, a)| ais.records[*a].ship_type.as_str()));
    let mut rows = Vec::with_capacity(matched.len());
    let mut features = Vec::with_capacity(matched.len() * feature_len(images.dims));
    for (img, a) in &matched {
        let rec = &ais.records[*a];
        rows.push(RowMeta {
            mmsi: img.mmsi,
            label: label_map.index_of(&rec.ship_type).expect("label map built from these rows"),
            ais: rec.fields(),
            confidence: img.confidence,
            images: vec![img.image_id.clone()],
        });
        features.extend_from_slice(&img.feature);
    }
    let report = JoinReport {
        images: images.records.len(),
        unmatched_images: images.records.len() - matched.len(),
        rows: rows.len(),
    };
    if report.unmatched_images > 0 {
        log::info!("{} images have no AIS record and were excluded", report.unmatched_images);
    }
    let ds = Dataset { kind: DatasetKind::Ic, feature_dims: images.dims, label_map, rows, features };
    (ds, report)
}

/// Per-vessel mean of image features joined with table A, one row per mmsi in ascending order.
///
/// Images are summed in `image_id` order in `f64`, so the result does not depend on
/// the order of `images`.
pub fn build_vessel_centred(images: &NffFile, ais: &AisTable) -> (Dataset, JoinReport) {
    let by_mmsi: HashMap<u64, usize> = ais.records.iter().enumerate().map(|(i, r)| (r.mmsi, i)).collect();
    let mut groups: BTreeMap<u64, Vec<&ImageFeatureRecord>> = BTreeMap::new();
    let mut unmatched = 0;
    for img in &images.records {
        if by_mmsi.contains_key(&img.mmsi) {
            groups.entry(img.mmsi).or_default().push(img);
        } else {
            unmatched += 1;
        }
    }
    let label_map = LabelMap::from_observed(groups.keys().map(|m| ais.records[by_mmsi[m]].ship_type.as_str()));
    let flen = feature_len(images.dims);
    let mut rows = Vec::with_capacity(groups.len());
    let mut features = Vec::with_capacity(groups.len() * flen);
    let mut acc = vec![0.0f64; flen];
    for (mmsi, mut group) in groups {
        group.sort_by(|a, b| a.image_id.cmp(&b.image_id).then_with(|| a.feature.partial_cmp(&b.feature).unwrap()));
        acc.iter_mut().for_each(|v| *v = 0.0);
        let mut conf = 0.0f64;
        for img in &group {
            for (s, &v) in acc.iter_mut().zip(&img.feature) {
                *s += v as f64;
            }
            conf += img.confidence as f64;
        }
        let n = group.len() as f64;
        features.extend(acc.iter().map(|s| (s / n) as f32));
        let rec = &ais.records[by_mmsi[&mmsi]];
        rows.push(RowMeta {
            mmsi,
            label: label_map.index_of(&rec.ship_type).expect("label map built from these rows"),
            ais: rec.fields(),
            confidence: (conf / n) as f32,
            images: group.iter().map(|g| g.image_id.clone()).collect(),
        });
    }
    let report = JoinReport { images: images.records.len(), unmatched_images: unmatched, rows: rows.len() };
    let ds = Dataset { kind: DatasetKind::Vc, feature_dims: images.dims, label_map, rows, features };
    (ds, report)
}

/// Drop classes with `min_vessels` or fewer distinct vessels and re-compact labels.
///
/// Returns the filtered dataset and the names of the removed classes.
pub fn filter_rare_classes(ds: &Dataset, min_vessels: usize) -> Result<(Dataset, Vec<String>)> {
    if min_vessels == 0 {
        return Err(Error::InvalidInput("min_vessels must be at least 1".into()));
    }
    let counts = ds.vessel_counts();
    let keep: Vec<usize> = (0..ds.n_classes()).filter(|&c| counts[c] > min_vessels).collect();
    let removed: Vec<String> =
        (0..ds.n_classes()).filter(|c| !keep.contains(c)).map(|c| ds.label_map.name(c).to_string()).collect();
    if keep.is_empty() {
        return Err(Error::EmptyDataset(format!("no class has more than {min_vessels} vessels")));
    }
    let mut remap = vec![None; ds.n_classes()];
    for (new, &old) in keep.iter().enumerate() {
        remap[old] = Some(new);
    }
    let indices: Vec<usize> = (0..ds.len()).filter(|&i| remap[ds.rows[i].label].is_some()).collect();
    let mut out = ds.subset(&indices);
    for r in &mut out.rows {
        r.label = remap[r.label].unwrap();
    }
    out.label_map = LabelMap { names: keep.iter().map(|&c| ds.label_map.name(c).to_string()).collect() };
    for name in &removed {
        log::info!("removed class {name:?}: {min_vessels} or fewer vessels");
    }
    Ok((out, removed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    /// Keep all rows of a vessel on the same side.
    pub by_mmsi: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_fraction: 0.75, seed: 0, by_mmsi: true }
    }
}

/// Row indices of both halves, each ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified seeded split.
///
/// Units (vessels when grouping by mmsi, rows otherwise) are shuffled per class;
/// the global train quota is spread over classes by largest remainder, keeping at
/// least one unit on each side of every class with two or more units.
pub fn split_indices(ds: &Dataset, spec: &SplitSpec) -> Result<SplitIndices> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset("cannot split an empty dataset".into()));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidInput(format!("train fraction {} outside (0, 1)", spec.train_fraction)));
    }
    // unit -> rows, units ordered by first appearance
    let mut units: Vec<(usize, Vec<usize>)> = Vec::new();
    if spec.by_mmsi {
        let mut pos: HashMap<u64, usize> = HashMap::new();
        for (i, r) in ds.rows.iter().enumerate() {
            let u = *pos.entry(r.mmsi).or_insert_with(|| {
                units.push((r.label, Vec::new()));
                units.len() - 1
            });
            if units[u].0 != r.label {
                return Err(Error::InvalidInput(format!("vessel {} carries two labels", r.mmsi)));
            }
            units[u].1.push(i);
        }
    } else {
        units = ds.rows.iter().enumerate().map(|(i, r)| (r.label, vec![i])).collect();
    }

    let m = ds.n_classes();
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (u, (label, _)) in units.iter().enumerate() {
        per_class[*label].push(u);
    }
    let total = units.len();
    let target = (spec.train_fraction * total as f64).round() as usize;
    let quotas = largest_remainder(&per_class.iter().map(|v| v.len()).collect::<Vec<_>>(), target);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, members) in per_class.iter_mut().enumerate() {
        members.shuffle(&mut rng);
        let n = members.len();
        let q = match n {
            0 => 0,
            1 => {
                log::warn!("class {:?} has a single unit, assigned to train", ds.label_map.name(c));
                1
            }
            _ => quotas[c].clamp(1, n - 1),
        };
        for (k, &u) in members.iter().enumerate() {
            let side = if k < q { &mut train } else { &mut test };
            side.extend_from_slice(&units[u].1);
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test })
}

/// Integer allocation of `target` proportional to `sizes`, ties to the lowest index.
fn largest_remainder(sizes: &[usize], target: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return vec![0; sizes.len()];
    }
    let exact: Vec<f64> = sizes.iter().map(|&s| s as f64 * target as f64 / total as f64).collect();
    let mut alloc: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut left = target.saturating_sub(alloc.iter().sum());
    for &c in order.iter().cycle().take(sizes.len() * 2) {
        if left == 0 {
            break;
        }
        if alloc[c] < sizes[c] {
            alloc[c] += 1;
            left -= 1;
        }
    }
    alloc
}

pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let idx = split_indices(ds, spec)?;
    Ok((ds.subset(&idx.train), ds.subset(&idx.test)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub spec: SplitSpec,
    pub indices: SplitIndices,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub kind: DatasetKind,
    pub feature_dims: [usize; 3],
    pub labels: LabelMap,
    pub features_file: String,
    pub features_sha256: String,
    pub split: Option<SplitRecord>,
    pub provenance: Provenance,
    pub rows: Vec<RowMeta>,
}

/// Write `manifest.json` and `features.nff` into `dir`.
pub fn save_dataset(
    dir: &Path,
    ds: &Dataset,
    split: Option<SplitRecord>,
    provenance: Provenance,
) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let records: Vec<ImageFeatureRecord> = (0..ds.len())
        .map(|i| {
            let r = &ds.rows[i];
            let id = match ds.kind {
                DatasetKind::Ic => r.images[0].clone(),
                DatasetKind::Vc => format!("vessel-{}", r.mmsi),
            };
            ImageFeatureRecord { image_id: id, mmsi: r.mmsi, confidence: r.confidence, feature: ds.feature(i).to_vec() }
        })
        .collect();
    let blob = nff::write_nff(BufWriter::new(Vec::new()), ds.feature_dims, &records)?
        .into_inner()
        .map_err(|e| Error::io(dir, e.into_error()))?;
    let features_path = dir.join(FEATURES_FILE);
    fs::write(&features_path, &blob).map_err(|e| Error::io(&features_path, e))?;
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        kind: ds.kind,
        feature_dims: ds.feature_dims,
        labels: ds.label_map.clone(),
        features_file: FEATURES_FILE.into(),
        features_sha256: sha256_hex(&blob),
        split,
        provenance,
        rows: ds.rows.clone(),
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Read a dataset directory (or its manifest path) written by [`save_dataset`].
pub fn load_dataset(path: &Path) -> Result<(Dataset, DatasetManifest)> {
    let manifest_path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let version = serde_json::from_str::<serde_json::Value>(&text)?
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::format(manifest_path.display().to_string(), "no format_version field"))?;
    if version != MANIFEST_VERSION as u64 {
        return Err(Error::VersionMismatch { path: manifest_path, found: version as u32, expected: MANIFEST_VERSION });
    }
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    let blob_path = dir.join(&manifest.features_file);
    let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    if sha256_hex(&blob) != manifest.features_sha256 {
        return Err(Error::Checksum { path: blob_path });
    }
    let file = nff::read_nff(blob.as_slice(), &blob_path.display().to_string())?;
    if file.dims != manifest.feature_dims || file.records.len() != manifest.rows.len() {
        return Err(Error::format(blob_path.display().to_string(), "feature blob disagrees with the manifest"));
    }
    let features = file.records.into_iter().flat_map(|r| r.feature).collect();
    let ds = Dataset::new(manifest.kind, manifest.feature_dims, manifest.labels.clone(), manifest.rows.clone(), features)?;
    Ok((ds, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ais::AisStaticRecord;

    const DIMS: [usize; 3] = [2, 1, 1];

    fn img(id: &str, mmsi: u64, f: [f32; 2]) -> ImageFeatureRecord {
        ImageFeatureRecord { image_id: id.into(), mmsi, confidence: 0.8, feature: f.to_vec() }
    }

    fn table(entries: &[(u64, &str)]) -> AisTable {
        AisTable::from_records(
            entries
                .iter()
                .map(|&(m, t)| AisStaticRecord::from_fields(m, [m as f64; 7], t))
                .collect(),
        )
    }

    #[test]
    fn ic_join_counts() {
        let images = NffFile {
            dims: DIMS,
            records: vec![img("a", 123, [1.0, 2.0]), img("b", 123, [3.0, 4.0]), img("c", 999, [0.0, 0.0])],
        };
        let (ds, rep) = build_image_centred(&images, &table(&[(123, "Tug")]));
        assert_eq!(ds.len(), 2);
        assert_eq!(rep.unmatched_images, 1);
        assert_eq!(ds.feature(1), &[3.0, 4.0]);
    }

    #[test]
    fn vc_mean_and_symmetry() {
        let images = NffFile {
            dims: DIMS,
            records: vec![img("a", 1, [1.5, -2.0]), img("b", 1, [-1.5, 2.0]), img("c", 2, [0.25, 7.0])],
        };
        let (ds, _) = build_vessel_centred(&images, &table(&[(1, "Tug"), (2, "Cargo")]));
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.feature(0), &[0.0, 0.0]);
        assert_eq!(ds.feature(1), &[0.25, 7.0]);
        assert_eq!(ds.rows[0].images, vec!["a", "b"]);
        assert_eq!(ds.label_map.names(), &["Cargo", "Tug"]);
    }

    #[test]
    fn vc_is_permutation_invariant() {
        let recs: Vec<_> = (0..5).map(|k| img(&format!("i{k}"), 4, [0.1 * k as f32 + 0.3, 1e7 / (k as f32 + 1.0)])).collect();
        let mut rev = recs.clone();
        rev.reverse();
        let t = table(&[(4, "Tug")]);
        let (a, _) = build_vessel_centred(&NffFile { dims: DIMS, records: recs }, &t);
        let (b, _) = build_vessel_centred(&NffFile { dims: DIMS, records: rev }, &t);
        assert_eq!(a.features(), b.features());
    }

    fn vessels_dataset(per_class: &[(&str, usize, usize)]) -> Dataset {
        // (class, vessels, images per vessel)
        let mut ais = Vec::new();
        let mut images = Vec::new();
        let mut mmsi = 1000;
        for &(name, vessels, imgs) in per_class {
            for _ in 0..vessels {
                mmsi += 1;
                ais.push(AisStaticRecord::from_fields(mmsi, [1.0; 7], name));
                for k in 0..imgs {
                    images.push(img(&format!("{mmsi}-{k}"), mmsi, [k as f32, 0.0]));
                }
            }
        }
        build_image_centred(&NffFile { dims: DIMS, records: images }, &AisTable::from_records(ais)).0
    }

    #[test]
    fn filter_boundary_is_strict() {
        let ds = vessels_dataset(&[("Cargo", 21, 1), ("Other", 20, 2), ("Tug", 32, 1)]);
        let (f, removed) = filter_rare_classes(&ds, 20).unwrap();
        assert_eq!(removed, vec!["Other"]);
        assert_eq!(f.label_map.names(), &["Cargo", "Tug"]);
        assert_eq!(f.len(), 53);
        assert!(f.rows.iter().all(|r| r.label < 2));
        assert!(filter_rare_classes(&ds, 40).is_err());
        assert!(filter_rare_classes(&ds, 0).is_err());
    }

    #[test]
    fn split_fraction_and_determinism() {
        let ds = vessels_dataset(&[("Cargo", 100, 1)]);
        let spec = SplitSpec { seed: 4, ..Default::default() };
        let a = split_indices(&ds, &spec).unwrap();
        assert_eq!((a.train.len(), a.test.len()), (75, 25));
        assert_eq!(a, split_indices(&ds, &spec).unwrap());
        let other = split_indices(&ds, &SplitSpec { seed: 5, ..spec }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn by_mmsi_keeps_vessels_whole() {
        let ds = vessels_dataset(&[("Cargo", 30, 5), ("Tug", 9, 3), ("Other", 1, 4)]);
        let s = split_indices(&ds, &SplitSpec { seed: 1, ..Default::default() }).unwrap();
        let side: HashMap<u64, bool> = s.train.iter().map(|&i| (ds.rows[i].mmsi, true)).collect();
        for &i in &s.test {
            assert!(!side.contains_key(&ds.rows[i].mmsi));
        }
        assert_eq!(s.train.len() + s.test.len(), ds.len());
        // the single-vessel class lands in train
        let other = ds.label_map.index_of("Other").unwrap();
        assert!(s.train.iter().any(|&i| ds.rows[i].label == other));
        assert!(s.test.iter().all(|&i| ds.rows[i].label != other));
    }

    #[test]
    fn largest_remainder_hits_target() {
        assert_eq!(largest_remainder(&[3, 3, 3], 7), vec![3, 2, 2]);
        assert_eq!(largest_remainder(&[2412, 864, 53, 42, 32], 2552).iter().sum::<usize>(), 2552);
    }

    #[test]
    fn persistence_round_trip_and_checks() {
        let ds = vessels_dataset(&[("Cargo", 3, 2), ("Tug", 2, 1)]);
        let dir = tempfile::tempdir().unwrap();
        let prov = Provenance::new(Some(3), &"cfg");
        save_dataset(dir.path(), &ds, None, prov).unwrap();
        let (back, manifest) = load_dataset(dir.path()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(manifest.provenance.seed, Some(3));

        let blob = dir.path().join(FEATURES_FILE);
        let bytes = fs::read(&blob).unwrap();
        fs::write(&blob, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Checksum { .. })));

        let mpath = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&mpath).unwrap().replace("\"format_version\": 1", "\"format_version\": 9");
        fs::write(&mpath, text).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::VersionMismatch { found: 9, .. })));
    }
}
