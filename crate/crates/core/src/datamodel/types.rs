use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{contract, ensure, Result};
use crate::numerics::Matrix;

/// Channel order of a spectral fingerprint: eight visible bands, NIR, Clear.
pub const SPECTRAL_CHANNELS: [&str; 10] =
    ["f1", "f2", "f3", "f4", "f5", "f6", "f7", "f8", "nir", "clear"];
pub const RSSI_COLUMNS: [&str; 6] = ["ap1", "ap2", "ap3", "ap4", "ap5", "ap6"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Spectral,
    Rssi,
}

impl Modality {
    pub fn dim(self) -> usize {
        match self {
            Modality::Spectral => SPECTRAL_CHANNELS.len(),
            Modality::Rssi => RSSI_COLUMNS.len(),
        }
    }

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Modality::Spectral => &SPECTRAL_CHANNELS,
            Modality::Rssi => &RSSI_COLUMNS,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Spectral => "spectral",
            Modality::Rssi => "rssi",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(Modality::Spectral),
            "rssi" => Ok(Modality::Rssi),
            other => Err(contract(format!("unknown modality `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralFingerprint(pub [f64; 10]);

impl SpectralFingerprint {
    pub fn new(channels: [f64; 10]) -> Result<Self> {
        ensure!(
            channels.iter().all(|v| v.is_finite() && *v >= 0.0),
            "spectral intensities must be finite and non-negative"
        );
        Ok(Self(channels))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RssiFingerprint(pub [f64; 6]);

impl RssiFingerprint {
    pub fn new(rssi: [f64; 6]) -> Result<Self> {
        ensure!(rssi.iter().all(|v| v.is_finite()), "rssi values must be finite");
        Ok(Self(rssi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fingerprint {
    Spectral(SpectralFingerprint),
    Rssi(RssiFingerprint),
}

impl Fingerprint {
    pub fn from_values(modality: Modality, values: &[f64]) -> Result<Self> {
        ensure!(
            values.len() == modality.dim(),
            "{modality} fingerprint needs {} values, got {}",
            modality.dim(),
            values.len()
        );
        Ok(match modality {
            Modality::Spectral => {
                Fingerprint::Spectral(SpectralFingerprint::new(values.try_into().unwrap())?)
            }
            Modality::Rssi => Fingerprint::Rssi(RssiFingerprint::new(values.try_into().unwrap())?),
        })
    }

    pub fn values(&self) -> &[f64] {
        match self {
            Fingerprint::Spectral(s) => &s.0,
            Fingerprint::Rssi(r) => &r.0,
        }
    }

    pub fn modality(&self) -> Modality {
        match self {
            Fingerprint::Spectral(_) => Modality::Spectral,
            Fingerprint::Rssi(_) => Modality::Rssi,
        }
    }

    /// Exact bit pattern, usable as a hash key.
    pub fn bits(&self) -> Vec<u64> {
        self.values().iter().map(|v| v.to_bits()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coordinate {
    pub x: f64,
    pub y: f64,
}

impl Coordinate {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Exact bit pattern, usable as a hash key.
    pub fn key(&self) -> (u64, u64) {
        (self.x.to_bits(), self.y.to_bits())
    }

    pub fn distance(&self, other: &Coordinate) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Axis-aligned room footprint `[0, width] x [0, height]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub width: f64,
    pub height: f64,
}

impl Extent {
    pub fn new(width: f64, height: f64) -> Self {
        Self { width, height }
    }

    pub fn square(side: f64) -> Self {
        Self::new(side, side)
    }

    pub fn contains(&self, c: &Coordinate) -> bool {
        c.x.is_finite()
            && c.y.is_finite()
            && (0.0..=self.width).contains(&c.x)
            && (0.0..=self.height).contains(&c.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Real,
    #[serde(rename = "pointgan")]
    PointGan,
    #[serde(rename = "freegan")]
    FreeGan,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Real => "real",
            Origin::PointGan => "pointgan",
            Origin::FreeGan => "freegan",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Origin {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Origin::Real),
            "pointgan" => Ok(Origin::PointGan),
            "freegan" => Ok(Origin::FreeGan),
            other => Err(contract(format!("unknown origin `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub fingerprint: Fingerprint,
    pub location: Coordinate,
    pub origin: Origin,
}

/// Fingerprint/coordinate pairs of one modality.
///
/// Real samples must lie inside the extent. Synthetic samples keep whatever
/// label they were given, since pseudo-labels are raw regression outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    modality: Modality,
    extent: Extent,
    samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn new(modality: Modality, extent: Extent, samples: Vec<LabeledSample>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            ensure!(
                s.fingerprint.modality() == modality,
                "sample {i} is {} but dataset is {modality}",
                s.fingerprint.modality()
            );
            ensure!(
                s.location.x.is_finite() && s.location.y.is_finite(),
                "sample {i} has a non-finite location"
            );
            if s.origin == Origin::Real {
                ensure!(
                    extent.contains(&s.location),
                    "real sample {i} at ({}, {}) lies outside the {}x{} m extent",
                    s.location.x,
                    s.location.y,
                    extent.width,
                    extent.height
                );
            }
        }
        Ok(Self {
            modality,
            extent,
            samples,
        })
    }

    pub fn empty(modality: Modality, extent: Extent) -> Self {
        Self {
            modality,
            extent,
            samples: Vec::new(),
        }
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn extent(&self) -> Extent {
        self.extent
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<LabeledSample> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.modality.dim()
    }

    pub fn with_extent(mut self, extent: Extent) -> Result<Self> {
        self.extent = extent;
        Self::new(self.modality, extent, self.samples)
    }

    /// Raw fingerprints as an `N x d` matrix.
    pub fn features(&self) -> Matrix {
        let d = self.dim();
        let mut data = Vec::with_capacity(self.len() * d);
        for s in &self.samples {
            data.extend_from_slice(s.fingerprint.values());
        }
        Matrix::from_vec(self.len(), d, data).expect("consistent modality")
    }

    /// Locations as an `N x 2` matrix.
    pub fn locations(&self) -> Matrix {
        let data = self
            .samples
            .iter()
            .flat_map(|s| [s.location.x, s.location.y])
            .collect();
        Matrix::from_vec(self.len(), 2, data).expect("two columns")
    }

    /// Distinct locations in order of first appearance.
    pub fn unique_locations(&self) -> Vec<Coordinate> {
        let mut seen = HashSet::new();
        self.samples
            .iter()
            .filter(|s| seen.insert(s.location.key()))
            .map(|s| s.location)
            .collect()
    }

    pub fn only_real(&self) -> bool {
        self.samples.iter().all(|s| s.origin == Origin::Real)
    }

    pub fn origin_histogram(&self) -> BTreeMap<Origin, usize> {
        let mut h = BTreeMap::new();
        for s in &self.samples {
            *h.entry(s.origin).or_insert(0) += 1;
        }
        h
    }

    /// Splits samples by whether their location is in `locations`.
    pub fn partition_by_locations(&self, locations: &[Coordinate]) -> (Dataset, Dataset) {
        let keys: HashSet<_> = locations.iter().map(Coordinate::key).collect();
        let (inside, outside): (Vec<_>, Vec<_>) = self
            .samples
            .iter()
            .partition(|s| keys.contains(&s.location.key()));
        (
            Dataset {
                modality: self.modality,
                extent: self.extent,
                samples: inside,
            },
            Dataset {
                modality: self.modality,
                extent: self.extent,
                samples: outside,
            },
        )
    }

    /// Appends samples of the same modality, keeping their origin tags.
    pub fn extend(&mut self, samples: impl IntoIterator<Item = LabeledSample>) -> Result<()> {
        for s in samples {
            ensure!(
                s.fingerprint.modality() == self.modality,
                "cannot add {} sample to {} dataset",
                s.fingerprint.modality(),
                self.modality
            );
            if s.origin == Origin::Real {
                ensure!(self.extent.contains(&s.location), "real sample outside extent");
            }
            self.samples.push(s);
        }
        Ok(())
    }
}
