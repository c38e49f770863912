//! User placement, large-scale path loss and correlated Rayleigh channels
//! seen at the last metasurface layer.

use std::f64::consts::TAU;

use log::warn;
use nalgebra::Point3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::correlation::CorrelationModel;
use crate::error::{Error, Result};
use crate::geometry::SystemGeometry;
use crate::linalg::{CVector, C64};
use crate::rng::complex_normal_vector;

pub const REFERENCE_PATH_LOSS_DB: f64 = -30.0;
pub const PATH_LOSS_EXPONENT: f64 = 2.8;
pub const NOISE_POWER_DBM: f64 = -104.0;
pub const DISK_RADIUS: f64 = 10.0;
pub const DISK_OFFSET: f64 = 25.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w) + 30.0
}

/// `C0 * d^-alpha`. Distances under the 1 m reference are outside the model
/// and logged, but still evaluated.
pub fn path_loss(distance: f64, reference_gain: f64, exponent: f64) -> Result<f64> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(Error::NonPositiveDistance(distance));
    }
    if distance < 1.0 {
        warn!("UE distance {distance} m is inside the 1 m path-loss reference");
    }
    Ok(reference_gain * distance.powf(-exponent))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Every UE at the disk center.
    #[default]
    Center,
    /// Uniform over the disk area.
    Random,
}

/// Where users live and how their signal decays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserLayout {
    pub placement: Placement,
    pub disk_radius: f64,
    /// Axial distance from the last layer to the disk plane.
    pub disk_offset: f64,
    pub reference_gain_db: f64,
    pub exponent: f64,
}

impl Default for UserLayout {
    fn default() -> Self {
        Self {
            placement: Placement::Center,
            disk_radius: DISK_RADIUS,
            disk_offset: DISK_OFFSET,
            reference_gain_db: REFERENCE_PATH_LOSS_DB,
            exponent: PATH_LOSS_EXPONENT,
        }
    }
}

impl UserLayout {
    pub fn validate(&self) -> Result<()> {
        if !(self.disk_radius >= 0.0) || !self.disk_radius.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "disk radius {} must be >= 0",
                self.disk_radius
            )));
        }
        if !(self.disk_offset > 0.0) || !self.disk_offset.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "disk offset {} must be > 0",
                self.disk_offset
            )));
        }
        if !self.reference_gain_db.is_finite() || !(self.exponent >= 0.0) {
            return Err(Error::InvalidArgument(
                "path-loss parameters must be finite, exponent >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ue {
    /// 1-based.
    pub index: usize,
    pub position: Point3<f64>,
    /// Distance to the last-layer center, meters.
    pub distance: f64,
    /// Linear large-scale power gain.
    pub path_loss: f64,
    /// Pilot power, watts.
    pub pilot_power: f64,
}

/// Draws `count` users on the disk facing the last layer. Pilot powers start
/// at zero; the caller sets them from the target SNR.
pub fn sample_ue_positions<R: Rng + ?Sized>(
    geometry: &SystemGeometry,
    layout: &UserLayout,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Ue>> {
    layout.validate()?;
    if count == 0 {
        return Err(Error::InvalidArgument("at least one UE is required".into()));
    }
    let center = geometry.last_layer_center();
    let gain = db_to_linear(layout.reference_gain_db);
    (1..=count)
        .map(|index| {
            let (x, y) = match layout.placement {
                Placement::Center => (0.0, 0.0),
                Placement::Random => {
                    let radius = layout.disk_radius * rng.random::<f64>().sqrt();
                    let angle = TAU * rng.random::<f64>();
                    (radius * angle.cos(), radius * angle.sin())
                }
            };
            let position = Point3::new(center.x + x, center.y + y, center.z + layout.disk_offset);
            let distance = nalgebra::distance(&position, &center);
            Ok(Ue {
                index,
                position,
                distance,
                path_loss: path_loss(distance, gain, layout.exponent)?,
                pilot_power: 0.0,
            })
        })
        .collect()
}

/// `sqrt(beta) * sqrt_R * v` with `v ~ CN(0, I)`.
pub fn sample_channel<R: Rng + ?Sized>(model: &CorrelationModel, path_loss: f64, rng: &mut R) -> CVector {
    let v = complex_normal_vector(rng, model.dim(), 1.0);
    model.sqrt() * v * C64::new(path_loss.sqrt(), 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{self, CMatrix};
    use crate::rng::{stream, Purpose};
    use approx::assert_relative_eq;

    #[test]
    fn path_loss_examples() {
        let c0 = db_to_linear(-30.0);
        assert_relative_eq!(path_loss(1.0, c0, 2.8).unwrap(), 1e-3, max_relative = 1e-14);
        // 1e-3 * 25^-2.8 = 1e-3 * exp(-2.8 ln 25)
        let expected = 1e-3 * (-2.8 * 25f64.ln()).exp();
        assert_relative_eq!(path_loss(25.0, c0, 2.8).unwrap(), expected, max_relative = 1e-14);
        // Independent evaluation: 1.218338520778e-7, about -69.142 dB.
        assert_relative_eq!(expected, 1.218_338_520_778e-7, max_relative = 1e-10);
        assert_relative_eq!(linear_to_db(expected), -69.142_320_24, epsilon = 1e-7);
        assert_eq!(path_loss(123.0, c0, 0.0).unwrap(), c0);
        assert!(path_loss(0.5, c0, 2.8).is_ok());
        assert!(path_loss(0.0, c0, 2.8).is_err());
    }

    #[test]
    fn dbm_conversion() {
        assert_relative_eq!(dbm_to_watts(30.0), 1.0);
        assert_relative_eq!(dbm_to_watts(-104.0), 10f64.powf(-13.4), max_relative = 1e-12);
        assert_relative_eq!(watts_to_dbm(dbm_to_watts(-17.5)), -17.5, epsilon = 1e-12);
    }

    fn geom() -> SystemGeometry {
        SystemGeometry::reference(5, 6, 100).unwrap()
    }

    #[test]
    fn degenerate_disk_and_center_mode_sit_on_axis() {
        let g = geom();
        let mut rng = stream(1, Purpose::Placement, &[]);
        let zero_disk = UserLayout {
            placement: Placement::Random,
            disk_radius: 0.0,
            ..UserLayout::default()
        };
        for layout in [zero_disk, UserLayout::default()] {
            for ue in sample_ue_positions(&g, &layout, 5, &mut rng).unwrap() {
                assert_relative_eq!(ue.distance, 25.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn random_placement_is_area_uniform() {
        let g = geom();
        let layout = UserLayout {
            placement: Placement::Random,
            ..UserLayout::default()
        };
        let mut rng = stream(2, Purpose::Placement, &[]);
        let n = 40_000;
        let ues = sample_ue_positions(&g, &layout, n, &mut rng).unwrap();
        let center = g.last_layer_center();
        let inner = ues
            .iter()
            .filter(|u| (u.position.x - center.x).hypot(u.position.y - center.y) <= 5.0)
            .count() as f64
            / n as f64;
        let se = (0.25 * 0.75 / n as f64).sqrt();
        assert!((inner - 0.25).abs() < 4.0 * se, "inner fraction {inner}");
        let mean_d = ues.iter().map(|u| u.distance).sum::<f64>() / n as f64;
        assert!((25.0..=(25f64.hypot(10.0))).contains(&mean_d));
        assert!(ues.iter().all(|u| u.distance <= 25f64.hypot(10.0) + 1e-9));
    }

    #[test]
    fn channel_power_matches_prior() {
        let g = SystemGeometry::reference(5, 6, 16).unwrap();
        let model = CorrelationModel::isotropic(&g).unwrap();
        let beta = 2.5e-7;
        let mut rng = stream(3, Purpose::Channel, &[]);
        let draws = 10_000;
        let powers: Vec<f64> = (0..draws)
            .map(|_| sample_channel(&model, beta, &mut rng).norm_squared() / beta)
            .collect();
        let mean = powers.iter().sum::<f64>() / draws as f64;
        let var = powers.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let se = (var / draws as f64).sqrt();
        assert!((mean - 16.0).abs() < 3.0 * se, "mean {mean} se {se}");

        let zero = sample_channel(&model, 0.0, &mut rng);
        assert!(zero.iter().all(|z| *z == C64::new(0.0, 0.0)));
    }

    #[test]
    fn identity_correlation_gives_white_channel() {
        let model =
            CorrelationModel::new(linalg::identity(4), crate::correlation::CorrelationSource::Explicit).unwrap();
        let mut rng = stream(4, Purpose::Channel, &[]);
        let draws = 20_000;
        let mut cov = CMatrix::zeros(4, 4);
        for _ in 0..draws {
            let h = sample_channel(&model, 1.0, &mut rng);
            cov += &h * h.adjoint();
        }
        cov /= C64::new(draws as f64, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((cov[(i, j)] - C64::new(target, 0.0)).norm() < 0.04);
            }
        }
    }
}
