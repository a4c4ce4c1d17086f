//! Fingerprints, labeled datasets, reference grids, coordinate-level splits,
//! min-max normalization and CSV persistence.

mod csvio;
mod grid;
mod normalize;
mod types;

pub use csvio::{header, read_dataset, read_dataset_from, write_dataset, write_dataset_to};
pub use grid::{coordinate_split, make_grid};
pub use normalize::NormStats;
pub use types::{
    Coordinate, Dataset, Extent, Fingerprint, LabeledSample, Modality, Origin, RssiFingerprint,
    SpectralFingerprint, RSSI_COLUMNS, SPECTRAL_CHANNELS,
};
