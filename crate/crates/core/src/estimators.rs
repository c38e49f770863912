//! Linear channel estimators for the stacked observation
//! `y = tau_p sqrt(p) P h + n`.
//!
//! Every estimator is a fixed `N x (blocks * M)` matrix once `P`, the
//! statistics and the pilot power are known, so the Monte Carlo harness
//! builds each operator once and applies it per trial. The single-shot
//! functions below wrap the same operators.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::correlation::CorrelationModel;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, C64};
use crate::propagation::TransmissionMatrix;

pub const DEFAULT_RELATIVE_THRESHOLD: f64 = 1e-12;
pub const DEFAULT_ENERGY_FRACTION: f64 = 1.0 - 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Mmse,
    Ls,
    Rsls,
    RslsIso,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::Mmse,
        EstimatorKind::Ls,
        EstimatorKind::Rsls,
        EstimatorKind::RslsIso,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Mmse => "mmse",
            EstimatorKind::Ls => "ls",
            EstimatorKind::Rsls => "rsls",
            EstimatorKind::RslsIso => "rsls_iso",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How many leading singular directions of `P R P^H` span the signal
/// subspace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum RankRule {
    /// Keep singular values above `threshold * sigma_max`.
    Relative(f64),
    /// Keep the fewest leading singular values holding this fraction of the
    /// total.
    Energy(f64),
}

impl Default for RankRule {
    fn default() -> Self {
        RankRule::Relative(DEFAULT_RELATIVE_THRESHOLD)
    }
}

impl RankRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RankRule::Relative(t) if (0.0..1.0).contains(&t) => Ok(()),
            RankRule::Energy(e) if e > 0.0 && e <= 1.0 => Ok(()),
            other => Err(Error::InvalidArgument(format!("invalid rank rule {other:?}"))),
        }
    }

    /// Number of values kept from a non-increasing spectrum.
    pub fn count(&self, spectrum: &[f64]) -> usize {
        let max = spectrum.first().copied().unwrap_or(0.0);
        match *self {
            RankRule::Relative(t) => spectrum.iter().filter(|&&s| s > t * max).count(),
            RankRule::Energy(e) => {
                let total: f64 = spectrum.iter().sum();
                let mut acc = 0.0;
                for (i, s) in spectrum.iter().enumerate() {
                    acc += s;
                    if acc >= e * total {
                        return i + 1;
                    }
                }
                spectrum.len()
            }
        }
    }
}

/// Which correlation matrix a subspace was extracted from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisSource {
    TrueCorrelation,
    Isotropic,
}

/// Dominant left singular vectors of `P R P^H`.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    /// Orthonormal columns, `rows(P) x rank`.
    pub u: CMatrix,
    /// Full non-increasing spectrum of `P R P^H`.
    pub spectrum: Vec<f64>,
    pub rank: usize,
    pub source: BasisSource,
    pub rule: RankRule,
}

/// Signal subspace of `P R P^H`. The SVD runs on `P sqrt(R)`, whose left
/// singular vectors are the same and whose squared singular values are the
/// spectrum, which avoids squaring the condition number.
pub fn subspace_basis(
    p: &CMatrix,
    model: &CorrelationModel,
    rule: RankRule,
    source: BasisSource,
) -> Result<SubspaceBasis> {
    rule.validate()?;
    if p.ncols() != model.dim() {
        return Err(Error::Dimension(format!(
            "P has {} columns, R is {}x{}",
            p.ncols(),
            model.dim(),
            model.dim()
        )));
    }
    let svd = linalg::svd(&(p * model.sqrt()));
    let spectrum: Vec<f64> = svd.singular_values.iter().map(|s| s * s).collect();
    if spectrum.first().copied().unwrap_or(0.0) == 0.0 {
        return Err(Error::Singular("P R P^H is the zero matrix".into()));
    }
    let rank = rule.count(&spectrum);
    Ok(SubspaceBasis {
        u: svd.u.columns(0, rank).into_owned(),
        spectrum,
        rank,
        source,
        rule,
    })
}

impl SubspaceBasis {
    /// `||U^H U - I||_max`.
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = self.u.adjoint() * &self.u;
        (gram - linalg::identity(self.rank))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// `||(I - U U^H) A||_F / ||A||_F`: how much of `A`'s column space lies
    /// outside the basis.
    pub fn residual(&self, a: &CMatrix) -> f64 {
        let inside = &self.u * (self.u.adjoint() * a);
        linalg::relative_error(&inside, a)
    }
}

/// Bias left by projecting onto a subspace before inversion:
/// `||(I - X) R (I - X)^H||_F / ||R||_F` with `X = P^+ U U^H P`.
pub fn subspace_bias(p: &TransmissionMatrix, basis: &SubspaceBasis, r: &CMatrix) -> f64 {
    let x = (p.pinv() * &basis.u) * (basis.u.adjoint() * p.matrix());
    let leak = linalg::identity(r.nrows()) - x;
    linalg::frobenius(&(&leak * r * leak.adjoint())) / linalg::frobenius(r)
}

fn pilot_gain(power: f64, tau_p: usize) -> Result<f64> {
    if !(power > 0.0) || tau_p == 0 {
        return Err(Error::InvalidArgument(format!(
            "pilot power {power} and tau_p {tau_p} must be positive"
        )));
    }
    Ok(tau_p as f64 * power.sqrt())
}

/// `P^+ / (tau_p sqrt(p))`.
pub fn ls_operator(p: &TransmissionMatrix, power: f64, tau_p: usize) -> Result<CMatrix> {
    p.ensure_full_column_rank()?;
    Ok(p.pinv() / C64::new(pilot_gain(power, tau_p)?, 0.0))
}

/// `P^+ U U^H / (tau_p sqrt(p))`.
pub fn rsls_operator(p: &TransmissionMatrix, basis: &SubspaceBasis, power: f64, tau_p: usize) -> Result<CMatrix> {
    p.ensure_full_column_rank()?;
    if basis.u.nrows() != p.observations() {
        return Err(Error::Dimension(format!(
            "basis has {} rows, P has {}",
            basis.u.nrows(),
            p.observations()
        )));
    }
    let reduced = p.pinv() * &basis.u / C64::new(pilot_gain(power, tau_p)?, 0.0);
    Ok(reduced * basis.u.adjoint())
}

/// `sqrt(p) beta R P^H (tau_p p beta P R P^H + sigma^2 I)^-1`, evaluated by a
/// Cholesky solve of the Hermitian system for the adjoint.
pub fn mmse_operator(
    p: &CMatrix,
    r: &CMatrix,
    path_loss: f64,
    power: f64,
    noise_power: f64,
    tau_p: usize,
) -> Result<CMatrix> {
    if p.ncols() != r.nrows() || !r.is_square() {
        return Err(Error::Dimension(format!(
            "P is {}x{}, R is {}x{}",
            p.nrows(),
            p.ncols(),
            r.nrows(),
            r.ncols()
        )));
    }
    if !(power >= 0.0) || !(path_loss >= 0.0) || !(noise_power >= 0.0) || tau_p == 0 {
        return Err(Error::InvalidArgument("negative power, path loss or noise".into()));
    }
    // B = sqrt(p) beta P R, so the operator is B^H C^-1 and its adjoint C^-1 B.
    let b = p * r * C64::new(power.sqrt() * path_loss, 0.0);
    let mut system = &b * p.adjoint() * C64::new(tau_p as f64 * power.sqrt(), 0.0);
    system = (&system + system.adjoint()) * C64::new(0.5, 0.0);
    for i in 0..system.nrows() {
        system[(i, i)] += C64::new(noise_power, 0.0);
    }
    let chol = system
        .cholesky()
        .ok_or_else(|| Error::Singular("MMSE system is not positive definite".into()))?;
    Ok(chol.solve(&b).adjoint())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub h: CVector,
    pub kind: EstimatorKind,
    /// `||y - tau_p sqrt(p) P h_hat||`.
    pub residual_norm: f64,
    /// Subspace dimension used (the full observation count for LS and MMSE).
    pub rank: usize,
}

fn finish(
    kind: EstimatorKind,
    operator: &CMatrix,
    y: &CVector,
    p: &CMatrix,
    power: f64,
    tau_p: usize,
    rank: usize,
) -> Result<Estimate> {
    if operator.ncols() != y.len() {
        return Err(Error::Dimension(format!(
            "observation has {} entries, expected {}",
            y.len(),
            operator.ncols()
        )));
    }
    let h = operator * y;
    let residual_norm = (y - p * &h * C64::new(tau_p as f64 * power.sqrt(), 0.0)).norm();
    Ok(Estimate {
        h,
        kind,
        residual_norm,
        rank,
    })
}

pub fn ls_estimate(y: &CVector, p: &TransmissionMatrix, power: f64, tau_p: usize) -> Result<Estimate> {
    let op = ls_operator(p, power, tau_p)?;
    finish(EstimatorKind::Ls, &op, y, p.matrix(), power, tau_p, p.observations())
}

#[allow(clippy::too_many_arguments)]
pub fn mmse_estimate(
    y: &CVector,
    p: &CMatrix,
    r: &CMatrix,
    path_loss: f64,
    power: f64,
    noise_power: f64,
    tau_p: usize,
) -> Result<Estimate> {
    let op = mmse_operator(p, r, path_loss, power, noise_power, tau_p)?;
    finish(EstimatorKind::Mmse, &op, y, p, power, tau_p, p.nrows())
}

pub fn rsls_estimate(
    y: &CVector,
    p: &TransmissionMatrix,
    basis: &SubspaceBasis,
    power: f64,
    tau_p: usize,
) -> Result<Estimate> {
    let op = rsls_operator(p, basis, power, tau_p)?;
    finish(EstimatorKind::Rsls, &op, y, p.matrix(), power, tau_p, basis.rank)
}

/// RSLS with the basis taken from the isotropic correlation.
pub fn rsls_iso_estimate(
    y: &CVector,
    p: &TransmissionMatrix,
    iso_basis: &SubspaceBasis,
    power: f64,
    tau_p: usize,
) -> Result<Estimate> {
    let op = rsls_operator(p, iso_basis, power, tau_p)?;
    finish(EstimatorKind::RslsIso, &op, y, p.matrix(), power, tau_p, iso_basis.rank)
}

/// MMSE through the eigen-decomposition `P R P^H = U L U^H`:
/// `P^-1 U L (L + sigma^2 / (tau_p p beta))^-1 U^H y / (tau_p sqrt(p))`.
/// Only defined for square invertible `P`; used to cross-check
/// [`mmse_estimate`].
#[allow(clippy::too_many_arguments)]
pub fn mmse_spectral_estimate(
    y: &CVector,
    p: &CMatrix,
    r: &CMatrix,
    path_loss: f64,
    power: f64,
    noise_power: f64,
    tau_p: usize,
) -> Result<CVector> {
    if !p.is_square() || p.ncols() != r.nrows() {
        return Err(Error::Dimension("spectral MMSE form needs a square P".into()));
    }
    let gain = pilot_gain(power, tau_p)?;
    let prp = p * r * p.adjoint();
    let eig = ((&prp + prp.adjoint()) * C64::new(0.5, 0.0)).symmetric_eigen();
    let floor = noise_power / (tau_p as f64 * power * path_loss);
    let mut projected = eig.eigenvectors.adjoint() * y;
    for (z, &l) in projected.iter_mut().zip(eig.eigenvalues.iter()) {
        *z *= l / (l + floor);
    }
    let filtered = &eig.eigenvectors * projected / C64::new(gain, 0.0);
    p.clone()
        .lu()
        .solve(&filtered)
        .ok_or_else(|| Error::Singular("P is not invertible".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::CorrelationSource;
    use crate::geometry::SystemGeometry;
    use crate::linalg::relative_error_vec;
    use crate::propagation::{min_blocks, BsNumerator, PhaseSchedule, Propagation};
    use crate::rng::{complex_normal_vector, stream, Purpose};

    fn random_p(rows: usize, cols: usize, seed: u64) -> TransmissionMatrix {
        let mut rng = stream(seed, Purpose::Validation, &[]);
        let v = complex_normal_vector(&mut rng, rows * cols, 1.0);
        TransmissionMatrix::from_matrix(CMatrix::from_column_slice(rows, cols, v.as_slice()))
    }

    fn sim_p(m: usize, n: usize, seed: u64) -> (SystemGeometry, TransmissionMatrix) {
        let g = SystemGeometry::reference(m, 6, n).unwrap();
        let prop = Propagation::new(&g, BsNumerator::default()).unwrap();
        let mut rng = stream(seed, Purpose::Schedule, &[]);
        let schedule = PhaseSchedule::random(6, n, min_blocks(&g), &mut rng);
        (g.clone(), prop.transmission_matrix(&schedule).unwrap())
    }

    fn explicit(r: CMatrix) -> CorrelationModel {
        CorrelationModel::new(r, CorrelationSource::Explicit).unwrap()
    }

    #[test]
    fn rank_rules() {
        let s = [10.0, 5.0, 1e-3, 1e-9];
        assert_eq!(RankRule::Relative(1e-5).count(&s), 3);
        assert_eq!(RankRule::Relative(0.2).count(&s), 2);
        assert_eq!(RankRule::Energy(0.9).count(&s), 2);
        assert_eq!(RankRule::Energy(1.0).count(&s), 4);
        assert!(RankRule::Relative(-1.0).validate().is_err());
        assert!(RankRule::Energy(0.0).validate().is_err());
    }

    #[test]
    fn basis_ranks() {
        let p = random_p(8, 8, 1);
        let ones = explicit(CMatrix::from_element(8, 8, C64::new(1.0, 0.0)));
        let b = subspace_basis(p.matrix(), &ones, RankRule::default(), BasisSource::TrueCorrelation).unwrap();
        assert_eq!(b.rank, 1);
        let eye = explicit(linalg::identity(8));
        let b = subspace_basis(p.matrix(), &eye, RankRule::default(), BasisSource::TrueCorrelation).unwrap();
        assert_eq!(b.rank, 8);
        assert!(b.orthonormality_defect() < 1e-10);
        let zero = explicit(CMatrix::zeros(8, 8));
        assert!(subspace_basis(p.matrix(), &zero, RankRule::default(), BasisSource::Isotropic).is_err());
    }

    #[test]
    fn isotropic_basis_is_rank_deficient_on_reference_layer() {
        let (g, p) = sim_p(5, 100, 3);
        let iso = CorrelationModel::isotropic(&g).unwrap();
        let b = subspace_basis(p.matrix(), &iso, RankRule::default(), BasisSource::Isotropic).unwrap();
        assert!(b.rank < 100, "eta_iso = {}", b.rank);
        assert!(b.orthonormality_defect() < 1e-10);
    }

    #[test]
    fn ls_inverts_noise_free_model_and_is_linear() {
        let (g, p) = sim_p(5, 25, 4);
        let mut rng = stream(4, Purpose::Channel, &[]);
        let h = complex_normal_vector(&mut rng, g.atoms_per_layer, 1.0);
        let (power, tau): (f64, usize) = (0.2, 5);
        let y = p.matrix() * &h * C64::new(tau as f64 * power.sqrt(), 0.0);
        let est = ls_estimate(&y, &p, power, tau).unwrap();
        assert!(relative_error_vec(&est.h, &h) < 1e-8);
        assert!(est.residual_norm <= 1e-8 * y.norm());
        let scaled = ls_estimate(&(&y * C64::new(0.0, 3.0)), &p, power, tau).unwrap();
        assert!(relative_error_vec(&scaled.h, &(&est.h * C64::new(0.0, 3.0))) < 1e-12);
    }

    #[test]
    fn all_estimators_are_linear() {
        let (g, p) = sim_p(5, 25, 5);
        let iso = CorrelationModel::isotropic(&g).unwrap();
        let basis = subspace_basis(p.matrix(), &iso, RankRule::default(), BasisSource::Isotropic).unwrap();
        let mut rng = stream(5, Purpose::Noise, &[]);
        let a = complex_normal_vector(&mut rng, 25, 1.0);
        let b = complex_normal_vector(&mut rng, 25, 1.0);
        let (c1, c2) = (C64::new(0.3, -1.2), C64::new(-2.0, 0.5));
        let combo = &a * c1 + &b * c2;
        let ops = [
            ls_operator(&p, 1.0, 5).unwrap(),
            rsls_operator(&p, &basis, 1.0, 5).unwrap(),
            mmse_operator(p.matrix(), iso.matrix(), 1e-7, 1.0, 1e-13, 5).unwrap(),
        ];
        for op in ops {
            let lhs = &op * &combo;
            let rhs = &op * &a * c1 + &op * &b * c2;
            assert!(relative_error_vec(&lhs, &rhs) < 1e-10);
        }
    }

    #[test]
    fn full_subspace_rsls_equals_ls() {
        let p = random_p(6, 6, 6);
        let eye = explicit(linalg::identity(6));
        let basis = subspace_basis(p.matrix(), &eye, RankRule::default(), BasisSource::TrueCorrelation).unwrap();
        assert_eq!(basis.rank, 6);
        let y = complex_normal_vector(&mut stream(6, Purpose::Noise, &[]), 6, 1.0);
        let ls = ls_estimate(&y, &p, 1.0, 2).unwrap();
        let rs = rsls_estimate(&y, &p, &basis, 1.0, 2).unwrap();
        assert!(relative_error_vec(&rs.h, &ls.h) < 1e-10);
    }

    #[test]
    fn rsls_annihilates_out_of_subspace_noise() {
        let (g, p) = sim_p(5, 25, 7);
        let iso = CorrelationModel::isotropic(&g).unwrap();
        let basis = subspace_basis(p.matrix(), &iso, RankRule::Relative(1e-6), BasisSource::Isotropic).unwrap();
        assert!(basis.rank < 25);
        let mut rng = stream(7, Purpose::Noise, &[]);
        let raw = complex_normal_vector(&mut rng, 25, 1.0);
        let outside = &raw - &basis.u * (basis.u.adjoint() * &raw);
        let h = &p.pinv().clone() * &basis.u * complex_normal_vector(&mut rng, basis.rank, 1.0);
        let y = p.matrix() * &h;
        let clean = rsls_estimate(&y, &p, &basis, 1.0, 1).unwrap();
        let noisy = rsls_estimate(&(&y + &outside), &p, &basis, 1.0, 1).unwrap();
        assert!(relative_error_vec(&noisy.h, &clean.h) < 1e-12);
    }

    #[test]
    fn rsls_iso_equals_rsls_for_isotropic_truth() {
        let (g, p) = sim_p(5, 25, 8);
        let iso = CorrelationModel::isotropic(&g).unwrap();
        let b1 = subspace_basis(p.matrix(), &iso, RankRule::default(), BasisSource::TrueCorrelation).unwrap();
        let b2 = subspace_basis(p.matrix(), &iso, RankRule::default(), BasisSource::Isotropic).unwrap();
        let y = complex_normal_vector(&mut stream(8, Purpose::Noise, &[]), 25, 1.0);
        let a = rsls_estimate(&y, &p, &b1, 1.0, 5).unwrap();
        let b = rsls_iso_estimate(&y, &p, &b2, 1.0, 5).unwrap();
        assert_eq!(a.h, b.h);
        assert_eq!(b.kind, EstimatorKind::RslsIso);
    }

    #[test]
    fn mmse_limits() {
        let (g, p) = sim_p(5, 25, 9);
        let iso = CorrelationModel::isotropic(&g).unwrap();
        let y = complex_normal_vector(&mut stream(9, Purpose::Noise, &[]), 25, 1.0);
        let zero_prior = mmse_estimate(&y, p.matrix(), iso.matrix(), 0.0, 1.0, 1e-13, 5).unwrap();
        assert!(zero_prior.h.norm() == 0.0);
        let zero_r = mmse_estimate(&y, p.matrix(), &CMatrix::zeros(25, 25), 1e-7, 1.0, 1e-13, 5).unwrap();
        assert!(zero_r.h.norm() == 0.0);
    }

    #[test]
    fn mmse_forms_agree_on_square_p() {
        let (g, p) = sim_p(5, 25, 10);
        let iso = CorrelationModel::isotropic(&g).unwrap();
        let beta = 1.2e-7;
        let sigma2 = 4e-14;
        let gbar = p.matrix().norm_squared() / 25.0;
        let power = 100.0 * sigma2 / (5.0 * beta * gbar);
        let mut rng = stream(10, Purpose::Noise, &[]);
        let h = iso.sqrt() * complex_normal_vector(&mut rng, 25, beta);
        let y = p.matrix() * h * C64::new(5.0 * power.sqrt(), 0.0) + complex_normal_vector(&mut rng, 25, 5.0 * sigma2);
        let direct = mmse_estimate(&y, p.matrix(), iso.matrix(), beta, power, sigma2, 5).unwrap();
        let spectral = mmse_spectral_estimate(&y, p.matrix(), iso.matrix(), beta, power, sigma2, 5).unwrap();
        let err = relative_error_vec(&spectral, &direct.h);
        assert!(err < 1e-8, "relative difference {err:.3e}");
    }

    #[test]
    fn operator_dimension_checks() {
        let p = random_p(6, 4, 11);
        let model = explicit(linalg::identity(5));
        assert!(subspace_basis(p.matrix(), &model, RankRule::default(), BasisSource::Isotropic).is_err());
        let y = CVector::zeros(5);
        assert!(ls_estimate(&y, &p, 1.0, 1).is_err());
        assert!(ls_operator(&p, 0.0, 1).is_err());
        assert!(
            mmse_spectral_estimate(&CVector::zeros(6), p.matrix(), &linalg::identity(4), 1.0, 1.0, 1.0, 1).is_err()
        );
    }

    #[test]
    fn kinds_round_trip_by_name() {
        for k in EstimatorKind::ALL {
            assert_eq!(EstimatorKind::parse(k.name()), Some(k));
        }
        assert_eq!(EstimatorKind::parse("bogus"), None);
    }
}
