use serde::{Deserialize, Serialize};

use crate::datamodel::{Coordinate, Extent};
use crate::error::{ensure, Result};

/// Center wavelengths (nm) of the eight visible bands.
const BAND_CENTERS: [f64; 8] = [415.0, 445.0, 480.0, 515.0, 555.0, 590.0, 630.0, 680.0];
const BAND_SIGMA: f64 = 13.0;
const NIR_CENTER: f64 = 910.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub position: Coordinate,
    /// Height above the sensor plane, meters.
    pub height: f64,
    /// Relative emission per channel (F1..F8, NIR, Clear).
    pub emission: [f64; 10],
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessPoint {
    pub position: Coordinate,
    pub tx_power_dbm: f64,
    pub path_loss_exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn contains(&self, p: &Coordinate) -> bool {
        (self.x_min..=self.x_max).contains(&p.x) && (self.y_min..=self.y_max).contains(&p.y)
    }

    /// Whether the segment `a -> b` touches the rectangle (Liang-Barsky clip).
    pub fn intersects_segment(&self, a: &Coordinate, b: &Coordinate) -> bool {
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let mut t0 = 0.0f64;
        let mut t1 = 1.0f64;
        for (p, q) in [
            (-dx, a.x - self.x_min),
            (dx, self.x_max - a.x),
            (-dy, a.y - self.y_min),
            (dy, self.y_max - a.y),
        ] {
            if p == 0.0 {
                if q < 0.0 {
                    return false;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
                if t0 > t1 {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    pub rect: Rect,
    /// Transmitted fraction per spectral channel.
    pub spectral_attenuation: [f64; 10],
    pub rssi_attenuation_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomModel {
    pub extent: Extent,
    pub panels: Vec<Panel>,
    pub aps: Vec<AccessPoint>,
    #[serde(default)]
    pub occluders: Vec<Occluder>,
}

/// Relative spectrum of a phosphor-converted white LED: a narrow blue pump
/// plus a broad phosphor lobe. Smaller `blue_share` and a redder phosphor
/// peak give a warmer white.
fn led_spectrum(lambda: f64, blue_share: f64, phosphor_peak: f64, phosphor_width: f64) -> f64 {
    let g = |mu: f64, s: f64| (-0.5 * ((lambda - mu) / s).powi(2)).exp();
    blue_share * g(450.0, 11.0) + (1.0 - blue_share) * g(phosphor_peak, phosphor_width)
}

/// Channel responses of the sensor to an LED, normalized so the largest
/// visible band is 1. NIR picks up a small tail; Clear integrates 400-700 nm.
pub fn led_emission(blue_share: f64, phosphor_peak: f64, phosphor_width: f64) -> [f64; 10] {
    let spectrum = |l: f64| led_spectrum(l, blue_share, phosphor_peak, phosphor_width);
    let band = |center: f64, sigma: f64| -> f64 {
        (300..=1100)
            .map(|l| {
                let l = l as f64;
                spectrum(l) * (-0.5 * ((l - center) / sigma).powi(2)).exp()
            })
            .sum::<f64>()
    };
    let mut out = [0.0; 10];
    for (j, &c) in BAND_CENTERS.iter().enumerate() {
        out[j] = band(c, BAND_SIGMA);
    }
    // LED tails are tiny in the near infrared; the floor keeps the channel live.
    out[8] = band(NIR_CENTER, 25.0) + 0.02 * out.iter().take(8).cloned().fold(0.0, f64::max);
    out[9] = (400..=700).map(|l| spectrum(l as f64)).sum::<f64>() / 6.0;
    let peak = out[..8].iter().cloned().fold(0.0, f64::max);
    out.iter_mut().for_each(|v| *v /= peak);
    out
}

impl RoomModel {
    pub fn validate(&self) -> Result<()> {
        let e = self.extent;
        ensure!(
            e.width > 0.0 && e.height > 0.0,
            "room extent must be positive"
        );
        for (i, p) in self.panels.iter().enumerate() {
            ensure!(e.contains(&p.position), "panel {i} lies outside the room");
            ensure!(p.height > 0.0, "panel {i} height must be positive");
            ensure!(p.power > 0.0 && p.power.is_finite(), "panel {i} power must be positive");
            ensure!(
                p.emission.iter().all(|w| *w >= 0.0 && w.is_finite()),
                "panel {i} emission weights must be non-negative"
            );
        }
        for (i, ap) in self.aps.iter().enumerate() {
            ensure!(e.contains(&ap.position), "access point {i} lies outside the room");
            ensure!(
                ap.path_loss_exponent > 0.0,
                "access point {i} path-loss exponent must be positive"
            );
            ensure!(ap.tx_power_dbm.is_finite(), "access point {i} tx power must be finite");
        }
        ensure!(
            self.aps.is_empty() || self.aps.len() == 6,
            "rssi fingerprints need exactly 6 access points, room has {}",
            self.aps.len()
        );
        for (i, o) in self.occluders.iter().enumerate() {
            let r = o.rect;
            ensure!(
                r.x_min <= r.x_max && r.y_min <= r.y_max,
                "occluder {i} rectangle is inverted"
            );
            ensure!(
                e.contains(&Coordinate::new(r.x_min, r.y_min))
                    && e.contains(&Coordinate::new(r.x_max, r.y_max)),
                "occluder {i} lies outside the room"
            );
            ensure!(
                o.spectral_attenuation.iter().all(|a| (0.0..=1.0).contains(a)),
                "occluder {i} attenuation factors must lie in [0, 1]"
            );
            ensure!(o.rssi_attenuation_db >= 0.0, "occluder {i} rssi attenuation must be >= 0");
        }
        Ok(())
    }

    /// 7 x 7 m room with four ceiling panels near the corners and six
    /// access points on the walls.
    pub fn spectral_wifimix() -> Self {
        let panel = |x: f64, y: f64, blue: f64, peak: f64, power: f64| Panel {
            position: Coordinate::new(x, y),
            height: 2.5,
            emission: led_emission(blue, peak, 55.0),
            power,
        };
        let ap = |x: f64, y: f64, tx: f64, gamma: f64| AccessPoint {
            position: Coordinate::new(x, y),
            tx_power_dbm: tx,
            path_loss_exponent: gamma,
        };
        Self {
            extent: Extent::square(7.0),
            panels: vec![
                panel(1.0, 1.0, 0.08, 620.0, 10_000.0),
                panel(6.0, 1.0, 0.24, 582.0, 11_000.0),
                panel(1.0, 6.0, 0.36, 566.0, 9_500.0),
                panel(6.0, 6.0, 0.15, 555.0, 10_500.0),
            ],
            aps: vec![
                ap(0.0, 1.5, -40.0, 3.0),
                ap(0.0, 5.5, -42.0, 2.9),
                ap(7.0, 1.5, -41.0, 3.1),
                ap(7.0, 5.5, -39.0, 3.0),
                ap(3.5, 0.0, -40.0, 2.8),
                ap(3.5, 7.0, -43.0, 3.2),
            ],
            occluders: Vec::new(),
        }
    }

    /// 5 x 5 m room used for the clean-versus-cluttered comparison.
    pub fn spectral_robust() -> Self {
        let panel = |x: f64, y: f64, blue: f64, peak: f64, power: f64| Panel {
            position: Coordinate::new(x, y),
            height: 2.5,
            emission: led_emission(blue, peak, 55.0),
            power,
        };
        let ap = |x: f64, y: f64, tx: f64, gamma: f64| AccessPoint {
            position: Coordinate::new(x, y),
            tx_power_dbm: tx,
            path_loss_exponent: gamma,
        };
        Self {
            extent: Extent::square(5.0),
            panels: vec![
                panel(1.0, 1.0, 0.08, 620.0, 10_000.0),
                panel(4.0, 1.0, 0.24, 582.0, 11_000.0),
                panel(1.0, 4.0, 0.36, 566.0, 9_500.0),
                panel(4.0, 4.0, 0.15, 555.0, 10_500.0),
            ],
            aps: vec![
                ap(0.0, 1.0, -40.0, 3.0),
                ap(0.0, 4.0, -42.0, 2.9),
                ap(5.0, 1.0, -41.0, 3.1),
                ap(5.0, 4.0, -39.0, 3.0),
                ap(2.5, 0.0, -40.0, 2.8),
                ap(2.5, 5.0, -43.0, 3.2),
            ],
            occluders: Vec::new(),
        }
    }

    /// Noise-free spectral fingerprint at `at`.
    pub fn expected_spectral(&self, at: &Coordinate) -> [f64; 10] {
        let mut out = [0.0; 10];
        for p in &self.panels {
            let d2 = (p.position.x - at.x).powi(2) + (p.position.y - at.y).powi(2);
            let falloff = p.power / (d2 + p.height * p.height);
            let mut occlusion = [1.0; 10];
            for o in &self.occluders {
                if o.rect.intersects_segment(at, &p.position) {
                    occlusion
                        .iter_mut()
                        .zip(&o.spectral_attenuation)
                        .for_each(|(a, f)| *a *= f);
                }
            }
            for j in 0..10 {
                out[j] += falloff * p.emission[j] * occlusion[j];
            }
        }
        out
    }

    /// Noise-free RSSI (dBm) of every access point at `at`.
    pub fn expected_rssi(&self, at: &Coordinate) -> Vec<f64> {
        self.aps
            .iter()
            .map(|ap| {
                let dist = ap.position.distance(at).max(0.1);
                let loss: f64 = self
                    .occluders
                    .iter()
                    .filter(|o| o.rect.intersects_segment(at, &ap.position))
                    .map(|o| o.rssi_attenuation_db)
                    .sum();
                ap.tx_power_dbm - 10.0 * ap.path_loss_exponent * dist.log10() - loss
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_rectangle_intersection() {
        let r = Rect {
            x_min: 1.0,
            y_min: 1.0,
            x_max: 2.0,
            y_max: 2.0,
        };
        let c = Coordinate::new;
        assert!(r.intersects_segment(&c(0.0, 0.0), &c(3.0, 3.0)));
        assert!(r.intersects_segment(&c(1.5, 1.5), &c(1.6, 1.6)));
        assert!(!r.intersects_segment(&c(0.0, 0.0), &c(3.0, 0.5)));
        assert!(!r.intersects_segment(&c(0.0, 3.0), &c(0.5, 0.0)));
        assert!(r.intersects_segment(&c(0.0, 1.5), &c(3.0, 1.5)));
    }

    #[test]
    fn default_rooms_are_valid() {
        RoomModel::spectral_wifimix().validate().unwrap();
        RoomModel::spectral_robust().validate().unwrap();
    }

    #[test]
    fn led_profiles_differ_between_panels() {
        let warm = led_emission(0.08, 620.0, 55.0);
        let cool = led_emission(0.15, 555.0, 55.0);
        assert!(warm.iter().all(|v| *v > 0.0));
        // cooler white: more blue (F2) relative to red (F7)
        assert!(cool[1] / cool[6] > 1.3 * warm[1] / warm[6]);
    }

    #[test]
    fn validation_catches_bad_rooms() {
        let mut room = RoomModel::spectral_wifimix();
        room.panels[0].position = Coordinate::new(9.0, 1.0);
        assert!(room.validate().is_err());
        let mut room = RoomModel::spectral_wifimix();
        room.aps.pop();
        assert!(room.validate().is_err());
        let mut room = RoomModel::spectral_wifimix();
        room.occluders.push(Occluder {
            rect: Rect {
                x_min: 1.0,
                y_min: 1.0,
                x_max: 2.0,
                y_max: 2.0,
            },
            spectral_attenuation: [1.5; 10],
            rssi_attenuation_db: 3.0,
        });
        assert!(room.validate().is_err());
    }
}
