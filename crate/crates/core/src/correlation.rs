//! Spatial correlation of the last metasurface layer.
//!
//! Entry `(n, n')` of `R` is the angular average
//!
//! ```text
//! R[n, n'] = ∬ f(phi, theta) exp(j 2 pi (dH sin(phi) cos(theta) + dV sin(theta)) / lambda) dtheta dphi
//! ```
//!
//! over `[-pi/2, pi/2]^2`, where `(dH, dV)` are the in-plane offsets between
//! the two atoms. On the square grid the offsets are integer multiples of the
//! pitch, so the integral is evaluated once per distinct offset and scattered
//! into the matrix. Densities are normalized so that `R` has a unit diagonal.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use log::warn;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SystemGeometry;
use crate::linalg::{self, CMatrix, C64};

/// Default Gauss–Legendre order per angular axis.
pub const DEFAULT_QUADRATURE_ORDER: usize = 128;
/// Largest entry change under order doubling that still counts as converged.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-6;
/// Hermitian asymmetry accepted by [`psd_sqrt`], relative to `||R||_F`.
pub const HERMITIAN_TOLERANCE: f64 = 1e-9;
/// Clamped negative eigenvalue mass accepted by [`psd_sqrt`], relative to `tr(R)`.
pub const CLAMP_TOLERANCE: f64 = 1e-6;

/// `sin(pi x) / (pi x)`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Isotropic-scattering correlation between two atoms offset by `(dH, dV)`.
pub fn iso_entry(dh: f64, dv: f64, wavelength: f64) -> f64 {
    sinc(2.0 * dh.hypot(dv) / wavelength)
}

/// A single plane-wave arrival for [`ScatteringFunction::Discrete`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub azimuth: f64,
    pub elevation: f64,
    pub weight: f64,
}

/// Angular power density `f(phi, theta)` over azimuth and elevation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScatteringFunction {
    /// Uniform over the half-space: `f ∝ cos(theta)` on the full square.
    Isotropic,
    /// Uniform over the half-space restricted to an angular box.
    Sector { azimuth: (f64, f64), elevation: (f64, f64) },
    /// Bilinearly interpolated samples on a rectangular `(elevation, azimuth)`
    /// grid; `values` is row-major with one row per elevation. Zero outside
    /// the sampled hull.
    Tabulated {
        azimuth: Vec<f64>,
        elevation: Vec<f64>,
        values: Vec<f64>,
    },
    /// A finite set of plane waves (point masses).
    Discrete { arrivals: Vec<Arrival> },
}

impl ScatteringFunction {
    pub fn validate(&self) -> Result<()> {
        let in_range = |x: f64| (-FRAC_PI_2..=FRAC_PI_2).contains(&x);
        match self {
            ScatteringFunction::Isotropic => Ok(()),
            ScatteringFunction::Sector { azimuth, elevation } => {
                for (lo, hi) in [azimuth, elevation] {
                    if !(in_range(*lo) && in_range(*hi) && lo < hi) {
                        return Err(Error::InvalidArgument(format!(
                            "sector bounds ({lo}, {hi}) must be increasing within [-pi/2, pi/2]"
                        )));
                    }
                }
                Ok(())
            }
            ScatteringFunction::Tabulated {
                azimuth,
                elevation,
                values,
            } => {
                if azimuth.len() < 2 || elevation.len() < 2 {
                    return Err(Error::InvalidArgument(
                        "tabulated density needs at least 2x2 samples".into(),
                    ));
                }
                if values.len() != azimuth.len() * elevation.len() {
                    return Err(Error::InvalidArgument(format!(
                        "tabulated density has {} values for a {}x{} grid",
                        values.len(),
                        elevation.len(),
                        azimuth.len()
                    )));
                }
                for axis in [azimuth, elevation] {
                    if !axis.windows(2).all(|w| w[0] < w[1]) || !axis.iter().all(|&x| in_range(x)) {
                        return Err(Error::InvalidArgument(
                            "tabulated axes must be increasing within [-pi/2, pi/2]".into(),
                        ));
                    }
                }
                if values.iter().any(|&v| !(v >= 0.0)) {
                    return Err(Error::InvalidArgument("scattering density must be nonnegative".into()));
                }
                if values.iter().all(|&v| v == 0.0) {
                    return Err(Error::InvalidArgument("scattering density is identically zero".into()));
                }
                Ok(())
            }
            ScatteringFunction::Discrete { arrivals } => {
                if arrivals.is_empty() {
                    return Err(Error::InvalidArgument("no plane-wave arrivals".into()));
                }
                for a in arrivals {
                    if !(in_range(a.azimuth) && in_range(a.elevation)) || !(a.weight >= 0.0) {
                        return Err(Error::InvalidArgument(format!("invalid arrival {a:?}")));
                    }
                }
                if arrivals.iter().all(|a| a.weight == 0.0) {
                    return Err(Error::InvalidArgument("all arrival weights are zero".into()));
                }
                Ok(())
            }
        }
    }

    /// Integration box `((phi_lo, phi_hi), (theta_lo, theta_hi))` covering the
    /// support.
    fn support(&self) -> ((f64, f64), (f64, f64)) {
        let full = (-FRAC_PI_2, FRAC_PI_2);
        match self {
            ScatteringFunction::Sector { azimuth, elevation } => (*azimuth, *elevation),
            ScatteringFunction::Tabulated { azimuth, elevation, .. } => (
                (azimuth[0], azimuth[azimuth.len() - 1]),
                (elevation[0], elevation[elevation.len() - 1]),
            ),
            _ => (full, full),
        }
    }

    /// Unnormalized density value.
    fn density(&self, phi: f64, theta: f64) -> f64 {
        match self {
            ScatteringFunction::Isotropic | ScatteringFunction::Sector { .. } => theta.cos(),
            ScatteringFunction::Tabulated {
                azimuth,
                elevation,
                values,
            } => bilinear(azimuth, elevation, values, phi, theta),
            ScatteringFunction::Discrete { .. } => 0.0,
        }
    }
}

fn bilinear(xs: &[f64], ys: &[f64], values: &[f64], x: f64, y: f64) -> f64 {
    let locate = |axis: &[f64], v: f64| -> Option<(usize, f64)> {
        if v < axis[0] || v > axis[axis.len() - 1] {
            return None;
        }
        let i = axis.partition_point(|&a| a <= v).clamp(1, axis.len() - 1) - 1;
        Some((i, (v - axis[i]) / (axis[i + 1] - axis[i])))
    };
    let (Some((i, tx)), Some((j, ty))) = (locate(xs, x), locate(ys, y)) else {
        return 0.0;
    };
    let at = |row: usize, col: usize| values[row * xs.len() + col];
    let lower = at(j, i) * (1.0 - tx) + at(j, i + 1) * tx;
    let upper = at(j + 1, i) * (1.0 - tx) + at(j + 1, i + 1) * tx;
    lower * (1.0 - ty) + upper * ty
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut derivative = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            let p = if order == 0 { 1.0 } else { p1 };
            let p_prev = if order == 1 { 1.0 } else { p0 };
            derivative = n * (x * p - p_prev) / (x * x - 1.0);
            let step = p / derivative;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * derivative * derivative);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

fn mapped_rule(order: usize, (lo, hi): (f64, f64)) -> (Vec<f64>, Vec<f64>) {
    let (nodes, weights) = gauss_legendre(order);
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    (
        nodes.iter().map(|x| mid + half * x).collect(),
        weights.iter().map(|w| w * half).collect(),
    )
}

/// Weighted plane-wave directions `(sin(phi) cos(theta), sin(theta), weight)`
/// with weights summing to one.
fn directions(f: &ScatteringFunction, order: usize) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    match f {
        ScatteringFunction::Discrete { arrivals } => {
            for a in arrivals {
                out.push((a.azimuth.sin() * a.elevation.cos(), a.elevation.sin(), a.weight));
            }
        }
        _ => {
            let (az, el) = f.support();
            let (phis, wphi) = mapped_rule(order, az);
            let (thetas, wtheta) = mapped_rule(order, el);
            for (&theta, &wt) in thetas.iter().zip(&wtheta) {
                for (&phi, &wp) in phis.iter().zip(&wphi) {
                    let w = wt * wp * f.density(phi, theta);
                    if w != 0.0 {
                        out.push((phi.sin() * theta.cos(), theta.sin(), w));
                    }
                }
            }
        }
    }
    let total: f64 = out.iter().map(|d| d.2).sum();
    for d in &mut out {
        d.2 /= total;
    }
    out
}

/// Correlation for every grid offset `(i, j)` pitches, `i, j ∈ [-(s-1), s-1]`,
/// stored at `[(i + s - 1) * (2s - 1) + (j + s - 1)]`.
fn offset_table(f: &ScatteringFunction, geometry: &SystemGeometry, order: usize) -> Vec<C64> {
    let side = geometry.grid_side() as i64;
    let span = (2 * side - 1) as usize;
    let k = TAU * geometry.atom_pitch / geometry.wavelength;
    let dirs = directions(f, order);
    let mut table = vec![C64::new(0.0, 0.0); span * span];
    for i in -(side - 1)..side {
        for j in -(side - 1)..side {
            let idx = (i + side - 1) as usize * span + (j + side - 1) as usize;
            let (ri, rj) = (-i + side - 1, -j + side - 1);
            let mirror = ri as usize * span + rj as usize;
            if mirror < idx {
                table[idx] = table[mirror].conj();
                continue;
            }
            let (fi, fj) = (i as f64, j as f64);
            table[idx] = dirs
                .iter()
                .map(|&(u, v, w)| C64::from_polar(w, k * (fi * u + fj * v)))
                .sum();
        }
    }
    table
}

fn scatter_table(table: &[C64], geometry: &SystemGeometry) -> CMatrix {
    let side = geometry.grid_side();
    let span = 2 * side - 1;
    let n = geometry.atoms_per_layer;
    CMatrix::from_fn(n, n, |a, b| {
        let (ra, ca) = (a / side, a % side);
        let (rb, cb) = (b / side, b % side);
        // Horizontal offset follows columns, vertical follows rows.
        let i = ca + side - 1 - cb;
        let j = ra + side - 1 - rb;
        table[i * span + j]
    })
}

/// Quadrature outcome, including the order-doubling convergence check.
#[derive(Debug, Clone)]
pub struct QuadratureResult {
    pub model: CorrelationModel,
    pub order: usize,
    /// Largest entry change between `order` and `2 * order`.
    pub max_change: f64,
    pub converged: bool,
}

/// `R` for an arbitrary scattering density by tensor Gauss–Legendre
/// quadrature of order `order` per axis.
pub fn correlation_quadrature(
    f: &ScatteringFunction,
    geometry: &SystemGeometry,
    order: usize,
) -> Result<QuadratureResult> {
    geometry.validate()?;
    f.validate()?;
    if order == 0 {
        return Err(Error::InvalidArgument("quadrature order must be positive".into()));
    }
    let table = offset_table(f, geometry, order);
    let max_change = if matches!(f, ScatteringFunction::Discrete { .. }) {
        0.0
    } else {
        let refined = offset_table(f, geometry, 2 * order);
        table
            .iter()
            .zip(&refined)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    };
    let converged = max_change <= CONVERGENCE_TOLERANCE;
    if !converged {
        warn!("correlation quadrature of order {order} not converged (max change {max_change:.3e})");
    }
    let model = CorrelationModel::new(scatter_table(&table, geometry), CorrelationSource::Quadrature)?;
    Ok(QuadratureResult {
        model,
        order,
        max_change,
        converged,
    })
}

/// Closed-form isotropic correlation `R_iso` for the layer grid.
pub fn iso_matrix(geometry: &SystemGeometry) -> Result<CMatrix> {
    geometry.validate()?;
    let n = geometry.atoms_per_layer;
    let mut r = CMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let (dh, dv) = geometry.pair_offsets(a + 1, b + 1)?;
            r[(a, b)] = C64::new(iso_entry(dh, dv, geometry.wavelength), 0.0);
        }
    }
    Ok(r)
}

/// PSD square root with the amount of negative spectrum that was discarded.
#[derive(Debug, Clone)]
pub struct PsdSqrt {
    pub sqrt: CMatrix,
    /// `sum |min(e_i, 0)|` over the eigenvalues of the Hermitian part.
    pub clamped_mass: f64,
}

/// `V diag(sqrt(max(e, 0))) V^H` from the eigen-decomposition of `R`.
pub fn psd_sqrt(r: &CMatrix) -> Result<PsdSqrt> {
    let defect = linalg::hermitian_defect(r)?;
    if defect > HERMITIAN_TOLERANCE {
        return Err(Error::NotHermitian(defect));
    }
    let hermitian = (r + r.adjoint()) * C64::new(0.5, 0.0);
    let eig = hermitian.symmetric_eigen();
    let clamped_mass = eig.eigenvalues.iter().filter(|&&e| e < 0.0).fold(0.0, |acc, e| acc - e);
    let trace = linalg::trace(r).re;
    if clamped_mass > CLAMP_TOLERANCE * trace.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NotPsd {
            clamped: clamped_mass,
            trace,
        });
    }
    let roots = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&e| C64::new(e.max(0.0).sqrt(), 0.0)),
    );
    let mut scaled = eig.eigenvectors.clone();
    for (mut col, root) in scaled.column_iter_mut().zip(roots.iter()) {
        col *= *root;
    }
    Ok(PsdSqrt {
        sqrt: scaled * eig.eigenvectors.adjoint(),
        clamped_mass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationSource {
    /// Closed-form isotropic sinc model.
    Isotropic,
    /// Angular quadrature of a scattering density.
    Quadrature,
    /// Supplied directly by the caller.
    Explicit,
}

/// Hermitian PSD correlation matrix together with its square root.
#[derive(Debug, Clone)]
pub struct CorrelationModel {
    r: CMatrix,
    sqrt_r: CMatrix,
    clamped_mass: f64,
    source: CorrelationSource,
}

impl CorrelationModel {
    pub fn new(r: CMatrix, source: CorrelationSource) -> Result<Self> {
        let PsdSqrt { sqrt, clamped_mass } = psd_sqrt(&r)?;
        Ok(Self {
            r,
            sqrt_r: sqrt,
            clamped_mass,
            source,
        })
    }

    pub fn isotropic(geometry: &SystemGeometry) -> Result<Self> {
        Self::new(iso_matrix(geometry)?, CorrelationSource::Isotropic)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.r
    }

    pub fn sqrt(&self) -> &CMatrix {
        &self.sqrt_r
    }

    pub fn clamped_mass(&self) -> f64 {
        self.clamped_mass
    }

    pub fn source(&self) -> CorrelationSource {
        self.source
    }

    pub fn dim(&self) -> usize {
        self.r.nrows()
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.r).re
    }
}
