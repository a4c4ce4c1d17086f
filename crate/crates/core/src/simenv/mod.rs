//! Synthetic rooms standing in for collected fingerprint data.
//!
//! Light intensity per channel is `sum(power * weight * occlusion / (d^2 + h^2))`
//! over ceiling panels, with multiplicative Gaussian noise per channel. RSSI
//! follows log-distance path loss with additive Gaussian noise in dB.

mod room;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

pub use room::{led_emission, AccessPoint, Occluder, Panel, Rect, RoomModel};

use crate::datamodel::{
    make_grid, Coordinate, Dataset, Fingerprint, LabeledSample, Modality, Origin, RssiFingerprint,
    SpectralFingerprint,
};
use crate::error::{ensure, Result};
use crate::seed::{derive_seed, rng_from_seed, StageRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Relative (multiplicative) Gaussian noise on each spectral channel.
    pub spectral_rel_sigma: f64,
    /// Additive Gaussian noise on RSSI, dB.
    pub rssi_sigma_db: f64,
}

impl Default for NoiseModel {
    /// Calibrated so a 32-sample window has a Normalized STD near 4.9e-4
    /// (spectral) and 3.3e-2 (RSSI).
    fn default() -> Self {
        Self {
            spectral_rel_sigma: 5.0e-4,
            rssi_sigma_db: 1.85,
        }
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            spectral_rel_sigma: 0.0,
            rssi_sigma_db: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.spectral_rel_sigma >= 0.0 && self.spectral_rel_sigma.is_finite(),
            "spectral noise must be non-negative"
        );
        ensure!(
            self.rssi_sigma_db >= 0.0 && self.rssi_sigma_db.is_finite(),
            "rssi noise must be non-negative"
        );
        Ok(())
    }
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma validated non-negative")
}

fn check_point(room: &RoomModel, at: &Coordinate, n: usize) -> Result<()> {
    ensure!(
        room.extent.contains(at),
        "coordinate ({}, {}) lies outside the {}x{} m room",
        at.x,
        at.y,
        room.extent.width,
        room.extent.height
    );
    ensure!(n >= 1, "sample count must be at least 1");
    Ok(())
}

fn spectral_from_rng(
    room: &RoomModel,
    noise: &NoiseModel,
    at: &Coordinate,
    n: usize,
    rng: &mut StageRng,
) -> Vec<SpectralFingerprint> {
    let mean = room.expected_spectral(at);
    let dist = normal(noise.spectral_rel_sigma);
    (0..n)
        .map(|_| {
            let mut v = mean;
            for c in &mut v {
                *c = (*c * (1.0 + dist.sample(rng))).max(0.0);
            }
            SpectralFingerprint(v)
        })
        .collect()
}

fn rssi_from_rng(
    room: &RoomModel,
    noise: &NoiseModel,
    at: &Coordinate,
    n: usize,
    rng: &mut StageRng,
) -> Vec<RssiFingerprint> {
    let mean = room.expected_rssi(at);
    let dist = normal(noise.rssi_sigma_db);
    (0..n)
        .map(|_| {
            let mut v = [0.0; 6];
            for (o, m) in v.iter_mut().zip(&mean) {
                *o = m + dist.sample(rng);
            }
            RssiFingerprint(v)
        })
        .collect()
}

pub fn sample_spectral(
    room: &RoomModel,
    noise: &NoiseModel,
    at: Coordinate,
    n: usize,
    seed: u64,
) -> Result<Vec<SpectralFingerprint>> {
    noise.validate()?;
    check_point(room, &at, n)?;
    Ok(spectral_from_rng(room, noise, &at, n, &mut rng_from_seed(seed)))
}

pub fn sample_rssi(
    room: &RoomModel,
    noise: &NoiseModel,
    at: Coordinate,
    n: usize,
    seed: u64,
) -> Result<Vec<RssiFingerprint>> {
    noise.validate()?;
    check_point(room, &at, n)?;
    ensure!(room.aps.len() == 6, "rssi sampling needs 6 access points");
    Ok(rssi_from_rng(room, noise, &at, n, &mut rng_from_seed(seed)))
}

/// `samples_per_point` readings at every grid point. Point `i` draws from a
/// stream derived from `(seed, modality, i)`, so any point can be regenerated
/// on its own.
pub fn generate_dataset(
    room: &RoomModel,
    noise: &NoiseModel,
    grid: &[Coordinate],
    samples_per_point: usize,
    modality: Modality,
    seed: u64,
) -> Result<Dataset> {
    room.validate()?;
    noise.validate()?;
    let mut samples = Vec::with_capacity(grid.len() * samples_per_point);
    for (i, p) in grid.iter().enumerate() {
        check_point(room, p, samples_per_point)?;
        let mut rng = rng_from_seed(derive_seed(seed, modality.as_str(), i as u64));
        let fps: Vec<Fingerprint> = match modality {
            Modality::Spectral => spectral_from_rng(room, noise, p, samples_per_point, &mut rng)
                .into_iter()
                .map(Fingerprint::Spectral)
                .collect(),
            Modality::Rssi => {
                ensure!(room.aps.len() == 6, "rssi sampling needs 6 access points");
                rssi_from_rng(room, noise, p, samples_per_point, &mut rng)
                    .into_iter()
                    .map(Fingerprint::Rssi)
                    .collect()
            }
        };
        samples.extend(fps.into_iter().map(|fingerprint| LabeledSample {
            fingerprint,
            location: *p,
            origin: Origin::Real,
        }));
    }
    Dataset::new(modality, room.extent, samples)
}

/// Copy of `room` with `n_occluders` random boxes added. Boxes are 0.3-1.0 m
/// per side, pass 30-90 % of light (uniformly across channels) and cost
/// 3-10 dB of RSSI.
pub fn apply_clutter(room: &RoomModel, clutter_seed: u64, n_occluders: usize) -> RoomModel {
    let mut out = room.clone();
    let mut rng = rng_from_seed(derive_seed(clutter_seed, "clutter", 0));
    let side = Uniform::new_inclusive(0.3f64, 1.0).expect("valid range");
    let light = Uniform::new_inclusive(0.3f64, 0.9).expect("valid range");
    let radio = Uniform::new_inclusive(3.0f64, 10.0).expect("valid range");
    let e = room.extent;
    for _ in 0..n_occluders {
        let w = side.sample(&mut rng).min(e.width);
        let h = side.sample(&mut rng).min(e.height);
        let x = rng.random_range(0.0..=(e.width - w));
        let y = rng.random_range(0.0..=(e.height - h));
        let a = light.sample(&mut rng);
        out.occluders.push(Occluder {
            rect: Rect {
                x_min: x,
                y_min: y,
                x_max: x + w,
                y_max: y + h,
            },
            spectral_attenuation: [a; 10],
            rssi_attenuation_db: radio.sample(&mut rng),
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClutterSpec {
    pub seed: u64,
    pub n_occluders: usize,
}

/// Everything needed to regenerate a dataset: room, noise, grid spacing and
/// sampling depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub room: RoomModel,
    #[serde(default)]
    pub noise: NoiseModel,
    pub spacing: f64,
    pub samples_per_point: usize,
    pub modalities: Vec<Modality>,
    #[serde(default)]
    pub clutter: Option<ClutterSpec>,
}

impl WorldConfig {
    /// 7 x 7 m, 1 m grid (64 points), 32 samples per point, both modalities.
    pub fn spectral_wifimix() -> Self {
        Self {
            room: RoomModel::spectral_wifimix(),
            noise: NoiseModel::default(),
            spacing: 1.0,
            samples_per_point: 32,
            modalities: vec![Modality::Spectral, Modality::Rssi],
            clutter: None,
        }
    }

    /// 5 x 5 m, 0.5 m grid (121 points), 10 spectral samples per point.
    pub fn spectral_robust() -> Self {
        Self {
            room: RoomModel::spectral_robust(),
            noise: NoiseModel::default(),
            spacing: 0.5,
            samples_per_point: 10,
            modalities: vec![Modality::Spectral],
            clutter: None,
        }
    }

    pub fn with_clutter(mut self, seed: u64, n_occluders: usize) -> Self {
        self.clutter = Some(ClutterSpec { seed, n_occluders });
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.room.validate()?;
        self.noise.validate()?;
        ensure!(self.samples_per_point >= 1, "samples_per_point must be >= 1");
        ensure!(!self.modalities.is_empty(), "at least one modality is required");
        Ok(())
    }

    /// Room with clutter applied, if configured.
    pub fn effective_room(&self) -> RoomModel {
        match self.clutter {
            Some(c) => apply_clutter(&self.room, c.seed, c.n_occluders),
            None => self.room.clone(),
        }
    }

    pub fn grid(&self) -> Result<Vec<Coordinate>> {
        make_grid(self.room.extent, self.spacing)
    }

    pub fn generate(&self, modality: Modality, seed: u64) -> Result<Dataset> {
        self.validate()?;
        generate_dataset(
            &self.effective_room(),
            &self.noise,
            &self.grid()?,
            self.samples_per_point,
            modality,
            seed,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::normalized_std;

    fn room() -> RoomModel {
        RoomModel::spectral_wifimix()
    }

    #[test]
    fn zero_noise_repeats_exactly() {
        let s = sample_spectral(&room(), &NoiseModel::noiseless(), Coordinate::new(2.0, 3.0), 5, 1)
            .unwrap();
        assert!(s.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn outside_points_are_rejected() {
        let noise = NoiseModel::default();
        assert!(sample_spectral(&room(), &noise, Coordinate::new(7.5, 1.0), 3, 1).is_err());
        assert!(sample_rssi(&room(), &noise, Coordinate::new(-0.1, 1.0), 3, 1).is_err());
        assert!(sample_rssi(&room(), &noise, Coordinate::new(1.0, 1.0), 0, 1).is_err());
    }

    #[test]
    fn swapping_symmetric_panels_keeps_midpoint() {
        let mut r = room();
        r.panels.truncate(2);
        r.panels[1].emission = led_emission(0.3, 560.0, 55.0);
        r.panels[1].power = r.panels[0].power * 1.3;
        let mut swapped = r.clone();
        let (a, b) = (swapped.panels[0].clone(), swapped.panels[1].clone());
        swapped.panels[0] = Panel {
            position: a.position,
            ..b.clone()
        };
        swapped.panels[1] = Panel {
            position: b.position,
            ..a
        };
        let mid = Coordinate::new(3.5, 1.0);
        let x = r.expected_spectral(&mid);
        let y = swapped.expected_spectral(&mid);
        for j in 0..10 {
            assert!((x[j] - y[j]).abs() <= 1e-12 * x[j].abs());
        }
    }

    #[test]
    fn rssi_decreases_with_distance() {
        let r = room();
        let ap = r.aps[0].position;
        let mut last = f64::INFINITY;
        for k in 1..8 {
            let p = Coordinate::new(k as f64 * 0.8, ap.y);
            let v = sample_rssi(&r, &NoiseModel::noiseless(), p, 1, 0).unwrap()[0].0[0];
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn equidistant_identical_aps_agree() {
        let mut r = room();
        r.aps[1] = AccessPoint {
            position: Coordinate::new(0.0, 5.5),
            ..r.aps[0].clone()
        };
        let e = r.expected_rssi(&Coordinate::new(3.0, 3.5));
        assert!((e[0] - e[1]).abs() < 1e-12);
    }

    #[test]
    fn default_noise_calibration() {
        let noise = NoiseModel::default();
        let grid = make_grid(room().extent, 1.0).unwrap();
        let mut spec = Vec::new();
        let mut radio = Vec::new();
        for (i, p) in grid.iter().enumerate() {
            let s = sample_spectral(&room(), &noise, *p, 32, i as u64).unwrap();
            let rows: Vec<Vec<f64>> = s.iter().map(|f| f.0.to_vec()).collect();
            spec.push(normalized_std(&rows).unwrap().value);
            let r = sample_rssi(&room(), &noise, *p, 32, i as u64).unwrap();
            let rows: Vec<Vec<f64>> = r.iter().map(|f| f.0.to_vec()).collect();
            radio.push(normalized_std(&rows).unwrap().value);
        }
        let s = spec.iter().sum::<f64>() / spec.len() as f64;
        let r = radio.iter().sum::<f64>() / radio.len() as f64;
        assert!((2e-4..=8e-4).contains(&s), "spectral {s}");
        assert!((0.015..=0.06).contains(&r), "rssi {r}");
        assert!(r / s >= 10.0);
    }

    #[test]
    fn dataset_counts_and_determinism() {
        let w = WorldConfig::spectral_wifimix();
        let d = w.generate(Modality::Spectral, 4).unwrap();
        assert_eq!(d.len(), 2048);
        assert_eq!(d, w.generate(Modality::Spectral, 4).unwrap());
        assert_eq!(w.generate(Modality::Rssi, 4).unwrap().len(), 2048);
        assert_eq!(
            WorldConfig::spectral_robust()
                .generate(Modality::Spectral, 4)
                .unwrap()
                .len(),
            1210
        );
    }

    #[test]
    fn one_point_regenerates_alone() {
        let w = WorldConfig::spectral_wifimix();
        let full = w.generate(Modality::Spectral, 9).unwrap();
        let grid = w.grid().unwrap();
        let single =
            generate_dataset(&w.room, &w.noise, &grid[..6], 32, Modality::Spectral, 9).unwrap();
        assert_eq!(&full.samples()[..6 * 32], single.samples());
    }

    #[test]
    fn clutter_behaviour() {
        let r = room();
        assert_eq!(apply_clutter(&r, 5, 0), r);
        let a = apply_clutter(&r, 5, 6);
        assert_eq!(a, apply_clutter(&r, 5, 6));
        assert_eq!(a.occluders.len(), 6);
        a.validate().unwrap();
        assert!(r.occluders.is_empty(), "original untouched");

        let grid = make_grid(r.extent, 1.0).unwrap();
        let mut differs = false;
        for p in &grid {
            let clean = r.expected_spectral(p);
            let dirty = a.expected_spectral(p);
            for j in 0..10 {
                assert!(dirty[j] <= clean[j]);
            }
            differs |= clean != dirty;
        }
        assert!(differs);
    }

    #[test]
    fn clear_channel_peaks_under_a_panel() {
        let r = room();
        let grid = make_grid(r.extent, 1.0).unwrap();
        let best = grid
            .iter()
            .max_by(|a, b| {
                r.expected_spectral(a)[9]
                    .partial_cmp(&r.expected_spectral(b)[9])
                    .unwrap()
            })
            .unwrap();
        assert!(r.panels.iter().any(|p| p.position == *best), "{best:?}");
    }
}
