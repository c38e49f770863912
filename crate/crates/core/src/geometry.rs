//! Physical layout of the base-station array and the stacked metasurface.
//!
//! Coordinates are in meters. The BS array lies in the plane `z = 0`; layer
//! `l` (1-based, layer 1 nearest the BS) lies in the plane
//! `z = d_t + (l - 1) * d_layer`. Every layer is a centered `sqrt(N) x sqrt(N)`
//! grid with pitch `r_atom`, and all layer centers sit on the boresight axis
//! `x = y = 0`.
//!
//! Atoms are indexed row-major: atom `n` (1-based) occupies grid row
//! `(n - 1) / sqrt(N)` and column `(n - 1) % sqrt(N)`; columns run along `+x`
//! (horizontal), rows along `+y` (vertical). The BS uniform linear array is
//! centered on the boresight and runs along `x`.

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Propagation speed used to turn a carrier frequency into a wavelength, m/s.
/// The rounded value gives lambda = 10.714 mm at 28 GHz.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemGeometry {
    /// BS antennas `M`.
    pub num_antennas: usize,
    /// Metasurface layers `L`.
    pub num_layers: usize,
    /// Meta-atoms per layer `N`; must be a perfect square.
    pub atoms_per_layer: usize,
    pub wavelength: f64,
    /// Meta-atom length `d_x`.
    pub atom_length: f64,
    /// Meta-atom width `d_y`.
    pub atom_width: f64,
    /// Center-to-center atom spacing `r_atom`.
    pub atom_pitch: f64,
    /// Axial gap between the BS array and layer 1, `d_t`.
    pub bs_to_layer1: f64,
    /// Axial gap between consecutive layers, `d_layer`.
    pub layer_spacing: f64,
    pub antenna_pitch: f64,
}

impl SystemGeometry {
    /// The 28 GHz reference layout: `d_x = d_y = lambda/8`,
    /// `r_atom = lambda/4`, `d_t = d_layer = 5 lambda / L`, half-wavelength
    /// BS array.
    pub fn reference(num_antennas: usize, num_layers: usize, atoms_per_layer: usize) -> Result<Self> {
        Self::at_frequency(28e9, num_antennas, num_layers, atoms_per_layer)
    }

    pub fn at_frequency(
        carrier_hz: f64,
        num_antennas: usize,
        num_layers: usize,
        atoms_per_layer: usize,
    ) -> Result<Self> {
        if !(carrier_hz > 0.0) {
            return Err(Error::Geometry(format!(
                "carrier frequency must be positive, got {carrier_hz}"
            )));
        }
        let wavelength = SPEED_OF_LIGHT / carrier_hz;
        let spacing = if num_layers > 0 {
            5.0 * wavelength / num_layers as f64
        } else {
            0.0
        };
        let geometry = SystemGeometry {
            num_antennas,
            num_layers,
            atoms_per_layer,
            wavelength,
            atom_length: wavelength / 8.0,
            atom_width: wavelength / 8.0,
            atom_pitch: wavelength / 4.0,
            bs_to_layer1: spacing,
            layer_spacing: spacing,
            antenna_pitch: wavelength / 2.0,
        };
        geometry.validate()?;
        Ok(geometry)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_antennas == 0 || self.num_layers == 0 || self.atoms_per_layer == 0 {
            return Err(Error::Geometry(format!(
                "M, L and N must be at least 1 (M = {}, L = {}, N = {})",
                self.num_antennas, self.num_layers, self.atoms_per_layer
            )));
        }
        if exact_sqrt(self.atoms_per_layer).is_none() {
            return Err(Error::Geometry(format!(
                "atoms per layer must be a perfect square, got {}",
                self.atoms_per_layer
            )));
        }
        let lengths = [
            ("wavelength", self.wavelength),
            ("atom_length", self.atom_length),
            ("atom_width", self.atom_width),
            ("atom_pitch", self.atom_pitch),
            ("bs_to_layer1", self.bs_to_layer1),
            ("layer_spacing", self.layer_spacing),
            ("antenna_pitch", self.antenna_pitch),
        ];
        for (name, value) in lengths {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::Geometry(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        if self.atom_length > self.atom_pitch || self.atom_width > self.atom_pitch {
            return Err(Error::Geometry(format!(
                "meta-atoms ({} x {}) do not fit inside the pitch {}",
                self.atom_length, self.atom_width, self.atom_pitch
            )));
        }
        Ok(())
    }

    /// Side of the square layer grid, `sqrt(N)`.
    pub fn grid_side(&self) -> usize {
        exact_sqrt(self.atoms_per_layer).expect("validated geometry")
    }

    /// In-plane `(x, y)` coordinates of atom `n` (1-based) relative to the
    /// layer center.
    pub fn atom_offset(&self, n: usize) -> Result<(f64, f64)> {
        check_index("atom", n, self.atoms_per_layer)?;
        let side = self.grid_side();
        let row = (n - 1) / side;
        let col = (n - 1) % side;
        let center = (side as f64 - 1.0) / 2.0;
        Ok((
            (col as f64 - center) * self.atom_pitch,
            (row as f64 - center) * self.atom_pitch,
        ))
    }

    /// Axial coordinate of layer `l` (1-based).
    pub fn layer_z(&self, l: usize) -> Result<f64> {
        check_index("layer", l, self.num_layers)?;
        Ok(self.bs_to_layer1 + (l - 1) as f64 * self.layer_spacing)
    }

    pub fn atom_position(&self, l: usize, n: usize) -> Result<Point3<f64>> {
        let z = self.layer_z(l)?;
        let (x, y) = self.atom_offset(n)?;
        Ok(Point3::new(x, y, z))
    }

    pub fn antenna_position(&self, m: usize) -> Result<Point3<f64>> {
        check_index("antenna", m, self.num_antennas)?;
        let center = (self.num_antennas as f64 - 1.0) / 2.0;
        Ok(Point3::new((m as f64 - 1.0 - center) * self.antenna_pitch, 0.0, 0.0))
    }

    /// Signed horizontal and vertical offsets `(d^H, d^V)` from atom `n'` to
    /// atom `n` on the same layer.
    pub fn pair_offsets(&self, n: usize, n_prime: usize) -> Result<(f64, f64)> {
        let (x, y) = self.atom_offset(n)?;
        let (xp, yp) = self.atom_offset(n_prime)?;
        Ok((x - xp, y - yp))
    }

    /// Distance from atom `n'` on layer `l - 1` to atom `n` on layer `l`.
    pub fn inter_layer_distance(&self, n: usize, n_prime: usize) -> Result<f64> {
        let (dh, dv) = self.pair_offsets(n, n_prime)?;
        Ok((self.layer_spacing.powi(2) + dh * dh + dv * dv).sqrt())
    }

    /// Distance `r^1_{n,m}` from antenna `m` to atom `n` of layer 1.
    pub fn bs_distance(&self, n: usize, m: usize) -> Result<f64> {
        let atom = self.atom_position(1, n)?;
        let antenna = self.antenna_position(m)?;
        Ok((atom - antenna).norm())
    }

    /// Center of the last layer, the reference point for UE distances.
    pub fn last_layer_center(&self) -> Point3<f64> {
        Point3::new(0.0, 0.0, self.layer_z(self.num_layers).expect("validated geometry"))
    }
}

fn check_index(what: &'static str, index: usize, len: usize) -> Result<()> {
    if index == 0 || index > len {
        Err(Error::IndexOutOfRange { what, index, len })
    } else {
        Ok(())
    }
}

fn exact_sqrt(n: usize) -> Option<usize> {
    let root = (n as f64).sqrt().round() as usize;
    (root * root == n).then_some(root)
}
