//! Closed-form estimation error, normalization, and the random-codebook
//! search over phase schedules.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::{psd_sqrt, CorrelationModel};
use crate::error::{Error, Result};
use crate::estimators::{subspace_basis, subspace_bias, BasisSource, EstimatorKind, RankRule, SubspaceBasis};
use crate::linalg::{self, CMatrix, C64};
use crate::propagation::{PhaseSchedule, Propagation, TransmissionMatrix};
use crate::rng::{stream, Purpose};

/// Relative slack for the ordering checks.
const ORDERING_SLACK: f64 = 1e-9;

/// Everything besides `P` and `R` that sets the error level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub path_loss: f64,
    /// Watts.
    pub pilot_power: f64,
    /// Watts per sample.
    pub noise_power: f64,
    pub tau_p: usize,
}

impl LinkBudget {
    pub fn validate(&self) -> Result<()> {
        if !(self.path_loss >= 0.0) || !(self.pilot_power >= 0.0) || !(self.noise_power >= 0.0) || self.tau_p == 0 {
            return Err(Error::InvalidArgument(format!("invalid link budget {self:?}")));
        }
        Ok(())
    }

    /// `tau_p * p`, the pilot energy per block.
    fn energy(&self) -> f64 {
        self.tau_p as f64 * self.pilot_power
    }
}

/// Pilot power reaching `snr_db` under the observation SNR
/// `tau_p p beta g / sigma^2`, where `g` is the mean per-entry power gain of
/// `P` (see [`Propagation::mean_power_gain`]).
pub fn pilot_power_for_snr(snr_db: f64, path_loss: f64, noise_power: f64, tau_p: usize, gain: f64) -> Result<f64> {
    if !(path_loss > 0.0) || !(gain > 0.0) || tau_p == 0 {
        return Err(Error::InvalidArgument(
            "SNR mapping needs positive path loss, gain and tau_p".into(),
        ));
    }
    Ok(10f64.powf(snr_db / 10.0) * noise_power / (tau_p as f64 * path_loss * gain))
}

/// `sigma^2 tr{beta R (tau_p p beta P^H P R + sigma^2 I)^-1}`.
pub fn mse_mmse(p: &CMatrix, r: &CMatrix, budget: &LinkBudget) -> Result<f64> {
    mse_mmse_factored(p, &psd_sqrt(r)?.sqrt, budget)
}

/// [`mse_mmse`] with `R = S S^H` given by its factor `S`. Evaluated as
/// `beta ||L^-1 S^H||_F^2` with `L L^H = I + (tau_p p beta / sigma^2) (PS)^H PS`,
/// which stays nonnegative and well conditioned at any SNR.
pub fn mse_mmse_factored(p: &CMatrix, sqrt_r: &CMatrix, budget: &LinkBudget) -> Result<f64> {
    budget.validate()?;
    let n = sqrt_r.nrows();
    if p.ncols() != n {
        return Err(Error::Dimension(format!(
            "P has {} columns, the correlation factor has {n} rows",
            p.ncols()
        )));
    }
    let prior_energy = sqrt_r.norm_squared();
    if budget.pilot_power == 0.0 || budget.path_loss == 0.0 {
        return Ok(budget.path_loss * prior_energy);
    }
    let ps = p * sqrt_r;
    if budget.noise_power == 0.0 {
        // Noise-free: only the part of the prior that P S cannot see is left.
        let svd = linalg::svd(&ps);
        let tol = linalg::default_rank_tolerance(ps.nrows(), ps.ncols(), svd.sigma_max());
        let seen = svd.singular_values.iter().filter(|&&x| x > tol).count();
        let v = svd.v_adjoint.rows(0, seen).adjoint();
        let unseen = linalg::identity(n) - &v * v.adjoint();
        return Ok(budget.path_loss * (sqrt_r * unseen).norm_squared());
    }
    let snr = budget.energy() * budget.path_loss / budget.noise_power;
    let mut system = ps.adjoint() * &ps * C64::new(snr, 0.0);
    for i in 0..system.nrows() {
        system[(i, i)] += C64::new(1.0, 0.0);
    }
    let chol = system
        .cholesky()
        .ok_or_else(|| Error::Singular("MMSE error system is not positive definite".into()))?;
    let whitened = chol
        .l()
        .solve_lower_triangular(&sqrt_r.adjoint())
        .ok_or_else(|| Error::Singular("MMSE error system is singular".into()))?;
    Ok(budget.path_loss * whitened.norm_squared())
}

/// `sigma^2 / (tau_p p) ||P^+||_F^2`, equal to `sigma^2 tr{(tau_p p P^H P)^-1}`.
pub fn mse_ls(p: &TransmissionMatrix, budget: &LinkBudget) -> Result<f64> {
    budget.validate()?;
    p.ensure_full_column_rank()?;
    Ok(noise_scale(budget)? * p.pinv().norm_squared())
}

/// Noise-only error of subspace-projected LS, `sigma^2 / (tau_p p) ||P^+ U||_F^2`.
/// Exact when the channel lies in the subspace; see [`mse_rsls_exact`].
pub fn mse_rsls(p: &TransmissionMatrix, basis: &SubspaceBasis, budget: &LinkBudget) -> Result<f64> {
    budget.validate()?;
    p.ensure_full_column_rank()?;
    if basis.u.nrows() != p.observations() {
        return Err(Error::Dimension("basis does not match P".into()));
    }
    Ok(noise_scale(budget)? * (p.pinv() * &basis.u).norm_squared())
}

/// [`mse_rsls`] with the isotropic basis.
pub fn mse_rsls_iso(p: &TransmissionMatrix, iso_basis: &SubspaceBasis, budget: &LinkBudget) -> Result<f64> {
    mse_rsls(p, iso_basis, budget)
}

/// Noise term plus the truncation bias `beta tr{(I - X) R (I - X)^H}`,
/// `X = P^+ U U^H P`.
pub fn mse_rsls_exact(p: &TransmissionMatrix, basis: &SubspaceBasis, r: &CMatrix, budget: &LinkBudget) -> Result<f64> {
    let noise = mse_rsls(p, basis, budget)?;
    let x = (p.pinv() * &basis.u) * (basis.u.adjoint() * p.matrix());
    let leak = linalg::identity(r.nrows()) - x;
    let bias = linalg::trace(&(&leak * r * leak.adjoint())).re * budget.path_loss;
    Ok(noise + bias)
}

fn noise_scale(budget: &LinkBudget) -> Result<f64> {
    if budget.pilot_power == 0.0 {
        return Err(Error::InvalidArgument(
            "LS-type error is unbounded at zero pilot power".into(),
        ));
    }
    Ok(budget.noise_power / budget.energy())
}

/// `mse / (beta N)`.
pub fn nmse(mse: f64, path_loss: f64, atoms: usize) -> f64 {
    mse / (path_loss * atoms as f64)
}

/// Pairwise ordering of the exact errors; `false` entries are violations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub mmse_le_rsls: bool,
    pub mmse_le_rsls_iso: bool,
    pub rsls_le_ls: bool,
    pub rsls_le_rsls_iso: bool,
    pub rsls_iso_le_ls: bool,
    pub eta_le_eta_iso: bool,
}

impl OrderingCheck {
    pub fn holds(&self) -> bool {
        self.mmse_le_rsls
            && self.mmse_le_rsls_iso
            && self.rsls_le_ls
            && self.rsls_le_rsls_iso
            && self.rsls_iso_le_ls
            && self.eta_le_eta_iso
    }
}

/// Theoretical error of all four estimators on one `P`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub mmse: f64,
    pub ls: f64,
    pub rsls: f64,
    pub rsls_iso: f64,
    /// RSLS errors including truncation bias.
    pub rsls_exact: f64,
    pub rsls_iso_exact: f64,
    /// `||(I - X) R (I - X)^H||_F / ||R||_F` for the true-R basis.
    pub bias: f64,
    pub condition_number: f64,
    pub eta: usize,
    pub eta_iso: usize,
    pub observations: usize,
    pub rule: RankRule,
    pub path_loss: f64,
    pub atoms: usize,
    pub ordering: OrderingCheck,
}

impl MseReport {
    pub fn mse(&self, kind: EstimatorKind) -> f64 {
        match kind {
            EstimatorKind::Mmse => self.mmse,
            EstimatorKind::Ls => self.ls,
            EstimatorKind::Rsls => self.rsls,
            EstimatorKind::RslsIso => self.rsls_iso,
        }
    }

    pub fn nmse(&self, kind: EstimatorKind) -> f64 {
        nmse(self.mse(kind), self.path_loss, self.atoms)
    }

    /// Subspace dimension each estimator works in.
    pub fn eta(&self, kind: EstimatorKind) -> usize {
        match kind {
            EstimatorKind::Mmse => self.eta,
            EstimatorKind::Ls => self.observations,
            EstimatorKind::Rsls => self.eta,
            EstimatorKind::RslsIso => self.eta_iso,
        }
    }
}

/// `P` with both signal subspaces, reusable across link budgets.
#[derive(Debug, Clone)]
pub struct Subspaces {
    pub p: TransmissionMatrix,
    pub basis: SubspaceBasis,
    pub iso_basis: SubspaceBasis,
}

impl Subspaces {
    pub fn new(
        p: TransmissionMatrix,
        truth: &CorrelationModel,
        iso: &CorrelationModel,
        rule: RankRule,
    ) -> Result<Self> {
        p.ensure_full_column_rank()?;
        let basis = subspace_basis(p.matrix(), truth, rule, BasisSource::TrueCorrelation)?;
        let iso_basis = subspace_basis(p.matrix(), iso, rule, BasisSource::Isotropic)?;
        Ok(Self { p, basis, iso_basis })
    }

    pub fn basis_for(&self, kind: EstimatorKind) -> Option<&SubspaceBasis> {
        match kind {
            EstimatorKind::Rsls => Some(&self.basis),
            EstimatorKind::RslsIso => Some(&self.iso_basis),
            _ => None,
        }
    }

    pub fn report(&self, truth: &CorrelationModel, budget: &LinkBudget) -> Result<MseReport> {
        let r = truth.matrix();
        let mmse = mse_mmse_factored(self.p.matrix(), truth.sqrt(), budget)?;
        let ls = mse_ls(&self.p, budget)?;
        let rsls = mse_rsls(&self.p, &self.basis, budget)?;
        let rsls_iso = mse_rsls_iso(&self.p, &self.iso_basis, budget)?;
        let rsls_exact = mse_rsls_exact(&self.p, &self.basis, r, budget)?;
        let rsls_iso_exact = mse_rsls_exact(&self.p, &self.iso_basis, r, budget)?;
        let le = |a: f64, b: f64| a <= b * (1.0 + ORDERING_SLACK);
        let ordering = OrderingCheck {
            mmse_le_rsls: le(mmse, rsls_exact),
            mmse_le_rsls_iso: le(mmse, rsls_iso_exact),
            rsls_le_ls: le(rsls_exact, ls),
            rsls_le_rsls_iso: le(rsls_exact, rsls_iso_exact),
            rsls_iso_le_ls: le(rsls_iso_exact, ls),
            eta_le_eta_iso: self.basis.rank <= self.iso_basis.rank,
        };
        Ok(MseReport {
            mmse,
            ls,
            rsls,
            rsls_iso,
            rsls_exact,
            rsls_iso_exact,
            bias: subspace_bias(&self.p, &self.basis, r),
            condition_number: self.p.condition_number(),
            eta: self.basis.rank,
            eta_iso: self.iso_basis.rank,
            observations: self.p.observations(),
            rule: self.basis.rule,
            path_loss: budget.path_loss,
            atoms: r.nrows(),
            ordering,
        })
    }
}

/// Fixed inputs for scoring candidate schedules.
#[derive(Debug, Clone)]
pub struct CodebookContext<'a> {
    pub propagation: &'a Propagation,
    pub truth: &'a CorrelationModel,
    pub iso: &'a CorrelationModel,
    pub rule: RankRule,
    pub budget: LinkBudget,
    pub blocks: usize,
}

/// Scored candidates and the best one per estimator.
#[derive(Debug, Clone)]
pub struct Codebook {
    pub schedules: Vec<PhaseSchedule>,
    pub reports: Vec<MseReport>,
    pub selected: Vec<(EstimatorKind, usize)>,
}

impl Codebook {
    pub fn selected_index(&self, kind: EstimatorKind) -> Option<usize> {
        self.selected.iter().find(|(k, _)| *k == kind).map(|&(_, i)| i)
    }

    pub fn selected_schedule(&self, kind: EstimatorKind) -> Option<&PhaseSchedule> {
        self.selected_index(kind).map(|i| &self.schedules[i])
    }

    /// Median candidate NMSE for one estimator.
    pub fn median_nmse(&self, kind: EstimatorKind) -> f64 {
        let mut v: Vec<f64> = self.reports.iter().map(|r| r.nmse(kind)).collect();
        v.sort_by(f64::total_cmp);
        let mid = v.len() / 2;
        if v.len() % 2 == 1 {
            v[mid]
        } else {
            0.5 * (v[mid - 1] + v[mid])
        }
    }
}

/// Candidate `index` of the codebook drawn from `seed`.
pub fn codebook_candidate(seed: u64, index: usize, layers: usize, atoms: usize, blocks: usize) -> PhaseSchedule {
    let mut rng = stream(seed, Purpose::Codebook, &[index as u64]);
    PhaseSchedule::random(layers, atoms, blocks, &mut rng)
}

/// Draws `size` i.i.d. uniform-phase schedules, scores each by theoretical
/// error, and keeps the argmin per estimator with ties going to the lower
/// index.
pub fn codebook_optimize(
    size: usize,
    kinds: &[EstimatorKind],
    ctx: &CodebookContext<'_>,
    seed: u64,
) -> Result<Codebook> {
    if size == 0 {
        return Err(Error::InvalidArgument("codebook size must be at least 1".into()));
    }
    let geometry = ctx.propagation.geometry();
    let scored: Vec<(PhaseSchedule, MseReport)> = (0..size)
        .into_par_iter()
        .map(|i| {
            let schedule = codebook_candidate(seed, i, geometry.num_layers, geometry.atoms_per_layer, ctx.blocks);
            let p = ctx.propagation.transmission_matrix(&schedule)?;
            let report = Subspaces::new(p, ctx.truth, ctx.iso, ctx.rule)?.report(ctx.truth, &ctx.budget)?;
            Ok((schedule, report))
        })
        .collect::<Result<_>>()?;
    let (schedules, reports): (Vec<_>, Vec<_>) = scored.into_iter().unzip();
    let selected = kinds
        .iter()
        .map(|&kind| {
            let best = (0..reports.len())
                .min_by(|&a, &b| reports[a].mse(kind).total_cmp(&reports[b].mse(kind)).then(a.cmp(&b)))
                .expect("non-empty codebook");
            (kind, best)
        })
        .collect();
    Ok(Codebook {
        schedules,
        reports,
        selected,
    })
}
