//! Inputs and datasets: AIS records, image features and their joins.

pub mod ais;
pub mod dataset;
pub mod nff;

pub use ais::{load_ais_csv, read_ais_csv, write_ais_csv, AisField, AisStaticRecord, AisTable, AisVector, LoadReport, N_FIELDS};
pub use dataset::{
    build_image_centred, build_vessel_centred, filter_rare_classes, load_dataset, save_dataset, split, split_indices,
    Dataset, DatasetKind, DatasetManifest, JoinReport, LabelMap, RowMeta, SplitIndices, SplitRecord, SplitSpec,
};
pub use nff::{read_nff, read_nff_file, write_nff, write_nff_file, ImageFeatureRecord, NffFile, NffReader, NffWriter, FEATURE_DIMS, FEATURE_LEN};
