//! Small-scale brute-force checks of the whole model chain.

use std::fmt;

use crate::correlation::{correlation_quadrature, sinc, CorrelationModel, ScatteringFunction};
use crate::error::Result;
use crate::estimators::{mmse_estimate, mmse_spectral_estimate, subspace_basis, subspace_bias, BasisSource, RankRule};
use crate::geometry::SystemGeometry;
use crate::harness::config::ScenarioConfig;
use crate::harness::sweep::run_sweep;
use crate::linalg::{self, relative_error_vec, C64};
use crate::pilot::{dft_pilots, fast_path_observation, matched_filter_and_stack, uplink_signal};
use crate::propagation::{min_blocks, BsNumerator, PhaseSchedule, Propagation};
use crate::rng::{complex_normal_vector, stream, Purpose};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{} {:<28} {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            )?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ValidateOptions {
    pub seed: u64,
    /// Reference `sinc` the quadrature is compared with.
    pub sinc: fn(f64) -> f64,
    pub mc_trials: usize,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            sinc,
            mc_trials: 2000,
        }
    }
}

fn random_setup(m: usize, l: usize, n: usize, seed: u64) -> Result<(SystemGeometry, Propagation, PhaseSchedule)> {
    let g = SystemGeometry::reference(m, l, n)?;
    let prop = Propagation::new(&g, BsNumerator::default())?;
    let schedule = PhaseSchedule::random(
        l,
        n,
        min_blocks(&g),
        &mut stream(seed, Purpose::Validation, &[m as u64, n as u64]),
    );
    Ok((g, prop, schedule))
}

fn quadrature_vs_sinc(opts: &ValidateOptions) -> Result<Check> {
    let g = SystemGeometry::reference(1, 1, 16)?;
    let q = correlation_quadrature(&ScatteringFunction::Isotropic, &g, 128)?;
    let mut worst: f64 = 0.0;
    for a in 1..=16 {
        for b in 1..=16 {
            let (dh, dv) = g.pair_offsets(a, b)?;
            let reference = (opts.sinc)(2.0 * dh.hypot(dv) / g.wavelength);
            worst = worst.max((q.model.matrix()[(a - 1, b - 1)] - C64::new(reference, 0.0)).norm());
        }
    }
    Ok(Check {
        name: "quadrature_vs_sinc",
        passed: worst <= 1e-3 && q.converged,
        detail: format!(
            "max entry deviation {worst:.2e}, order-doubling change {:.2e}",
            q.max_change
        ),
    })
}

fn pilot_orthogonality() -> Result<Check> {
    let mut worst: f64 = 0.0;
    for k in [1, 4, 5, 20] {
        let book = dft_pilots(k, k)?;
        let gram = book.gram() - linalg::identity(k) * C64::new(k as f64, 0.0);
        worst = worst.max(gram.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    Ok(Check {
        name: "pilot_orthogonality",
        passed: worst <= 1e-12,
        detail: format!("max Gram deviation {worst:.2e}"),
    })
}

fn matched_filter_vs_fast_path(seed: u64) -> Result<Check> {
    let users = 3;
    let (g, prop, schedule) = random_setup(2, 3, 9, seed)?;
    let model = CorrelationModel::isotropic(&g)?;
    let mut rng = stream(seed, Purpose::Validation, &[1]);
    let channels: Vec<_> = (0..users)
        .map(|_| model.sqrt() * complex_normal_vector(&mut rng, 9, 1.0))
        .collect();
    let powers = [0.3, 1.0, 2.5];
    let pilots = dft_pilots(users, users)?;
    let raw = uplink_signal(&prop, &schedule, &channels, &powers, &pilots)?;
    let p = prop.transmission_matrix(&schedule)?;
    let mut worst: f64 = 0.0;
    for k in 0..users {
        let full = matched_filter_and_stack(&raw, &pilots, k)?;
        let fast = fast_path_observation(p.matrix(), &channels[k], powers[k], users, 0.0, &mut rng)?;
        worst = worst.max(relative_error_vec(&full, &fast));
    }
    Ok(Check {
        name: "matched_filter_vs_fast_path",
        passed: worst <= 1e-10,
        detail: format!("max relative difference {worst:.2e} over {users} users"),
    })
}

fn mmse_dual_form(seed: u64) -> Result<Check> {
    let (g, prop, schedule) = random_setup(5, 6, 25, seed)?;
    let p = prop.transmission_matrix(&schedule)?;
    let iso = CorrelationModel::isotropic(&g)?;
    let (beta, sigma2, tau) = (1.2e-7, 4e-14, 5);
    let power = 100.0 * sigma2 / (tau as f64 * beta * prop.mean_power_gain());
    let mut rng = stream(seed, Purpose::Validation, &[2]);
    let h = iso.sqrt() * complex_normal_vector(&mut rng, 25, beta);
    let y = p.matrix() * h * C64::new(tau as f64 * power.sqrt(), 0.0)
        + complex_normal_vector(&mut rng, 25, tau as f64 * sigma2);
    let direct = mmse_estimate(&y, p.matrix(), iso.matrix(), beta, power, sigma2, tau)?;
    let spectral = mmse_spectral_estimate(&y, p.matrix(), iso.matrix(), beta, power, sigma2, tau)?;
    let err = relative_error_vec(&spectral, &direct.h);
    Ok(Check {
        name: "mmse_dual_form",
        passed: err <= 1e-8,
        detail: format!("relative difference {err:.2e} (N = 25, M = 5)"),
    })
}

fn theory_vs_monte_carlo(opts: &ValidateOptions) -> Result<Check> {
    let mut config = ScenarioConfig::from_toml(
        "name = \"validate\"\n[geometry]\nantennas = 4\nlayers = 3\natoms = 16\n\
         [scenario]\nusers = 2\n[sweep]\nsnr_db = [10.0]\n",
    )?;
    config.sweep.trials = opts.mc_trials;
    config.sweep.seed = opts.seed;
    let rows = run_sweep(&config)?;
    let worst = rows
        .iter()
        .map(|r| (r.nmse_mc - r.nmse_theory).abs() / r.nmse_theory)
        .fold(0.0, f64::max);
    Ok(Check {
        name: "theory_vs_monte_carlo",
        passed: worst <= 0.05,
        detail: format!(
            "max relative gap {worst:.3} at 10 dB, {} trials x 2 users",
            opts.mc_trials
        ),
    })
}

fn vanishing_bias(seed: u64) -> Result<Check> {
    let (g, prop, schedule) = random_setup(5, 6, 100, seed)?;
    let p = prop.transmission_matrix(&schedule)?;
    let iso = CorrelationModel::isotropic(&g)?;
    let basis = subspace_basis(p.matrix(), &iso, RankRule::default(), BasisSource::TrueCorrelation)?;
    let bias = subspace_bias(&p, &basis, iso.matrix());
    Ok(Check {
        name: "vanishing_bias",
        passed: bias <= 1e-8,
        detail: format!(
            "relative bias {bias:.2e} with eta = {} of {}",
            basis.rank,
            p.observations()
        ),
    })
}

fn psd_sqrt_reconstruction() -> Result<Check> {
    let g = SystemGeometry::reference(5, 6, 100)?;
    let model = CorrelationModel::isotropic(&g)?;
    let err = linalg::relative_error(&(model.sqrt() * model.sqrt().adjoint()), model.matrix());
    Ok(Check {
        name: "psd_sqrt_reconstruction",
        passed: err <= 1e-8,
        detail: format!("relative error {err:.2e}, clamped mass {:.2e}", model.clamped_mass()),
    })
}

fn threshold_monotonicity(seed: u64) -> Result<Check> {
    let (g, prop, schedule) = random_setup(5, 6, 100, seed)?;
    let p = prop.transmission_matrix(&schedule)?;
    let iso = CorrelationModel::isotropic(&g)?;
    let etas = [1e-3, 1e-5, 1e-7]
        .iter()
        .map(|&t| subspace_basis(p.matrix(), &iso, RankRule::Relative(t), BasisSource::Isotropic).map(|b| b.rank))
        .collect::<Result<Vec<_>>>()?;
    Ok(Check {
        name: "threshold_monotonicity",
        passed: etas.windows(2).all(|w| w[0] <= w[1]),
        detail: format!("eta at 1e-3, 1e-5, 1e-7: {etas:?}"),
    })
}

pub fn validate_with(opts: &ValidateOptions) -> Result<ValidationReport> {
    let checks = vec![
        quadrature_vs_sinc(opts)?,
        pilot_orthogonality()?,
        matched_filter_vs_fast_path(opts.seed)?,
        mmse_dual_form(opts.seed)?,
        theory_vs_monte_carlo(opts)?,
        vanishing_bias(opts.seed)?,
        psd_sqrt_reconstruction()?,
        threshold_monotonicity(opts.seed)?,
    ];
    Ok(ValidationReport { checks })
}

pub fn validate(seed: u64) -> Result<ValidationReport> {
    validate_with(&ValidateOptions {
        seed,
        ..ValidateOptions::default()
    })
}
