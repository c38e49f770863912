//! Seeded Monte Carlo sweeps over SNR.

use std::time::Instant;

use log::info;
use rayon::prelude::*;

use crate::channel::{sample_ue_positions, Ue};
use crate::correlation::{correlation_quadrature, CorrelationModel, ScatteringFunction};
use crate::error::{Error, Result};
use crate::estimators::{ls_operator, mmse_operator, rsls_operator, EstimatorKind};
use crate::geometry::SystemGeometry;
use crate::harness::config::ScenarioConfig;
use crate::linalg::{CMatrix, C64};
use crate::performance::{
    codebook_optimize, pilot_power_for_snr, Codebook, CodebookContext, LinkBudget, MseReport, Subspaces,
};
use crate::pilot::{dft_pilots, PilotBook};
use crate::propagation::{PhaseSchedule, Propagation};
use crate::rng::{complex_normal_vector, stream, Purpose};

/// One CSV line: an estimator at one SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub estimator: EstimatorKind,
    pub snr_db: f64,
    pub nmse_mc: f64,
    pub nmse_theory: f64,
    pub trials: usize,
    pub eta: usize,
    pub seed: u64,
    pub wall_ms: u64,
}

/// Schedule used when no codebook search is configured.
pub fn sweep_schedule(seed: u64, geometry: &SystemGeometry, blocks: usize) -> PhaseSchedule {
    let mut rng = stream(seed, Purpose::Schedule, &[0]);
    PhaseSchedule::random(geometry.num_layers, geometry.atoms_per_layer, blocks, &mut rng)
}

/// Every model object a sweep needs, built once from a config.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub geometry: SystemGeometry,
    pub propagation: Propagation,
    pub truth: CorrelationModel,
    pub iso: CorrelationModel,
    /// Largest change under quadrature order doubling, when `truth` came
    /// from quadrature.
    pub quadrature_change: Option<f64>,
    pub users: Vec<Ue>,
    pub pilots: PilotBook,
    pub noise_power: f64,
    /// Mean per-entry power gain of `P`, the SNR reference.
    pub gain: f64,
    pub blocks: usize,
    /// Distinct schedules with their subspaces.
    pub subspaces: Vec<Subspaces>,
    pub schedules: Vec<PhaseSchedule>,
    /// `(estimator, index into subspaces)` for each configured estimator.
    pub assignment: Vec<(EstimatorKind, usize)>,
    pub codebook: Option<Codebook>,
}

impl Scenario {
    pub fn build(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.sweep.seed;
        let geometry = config.geometry()?;
        let propagation = Propagation::new(&geometry, config.geometry.bs_numerator)?;
        let iso = CorrelationModel::isotropic(&geometry)?;
        let (truth, quadrature_change) = match &config.scenario.scattering {
            ScatteringFunction::Isotropic => (iso.clone(), None),
            f => {
                let q = correlation_quadrature(f, &geometry, config.scenario.quadrature_order)?;
                (q.model, Some(q.max_change))
            }
        };
        let mut rng = stream(seed, Purpose::Placement, &[]);
        let users = sample_ue_positions(&geometry, &config.layout(), config.scenario.users, &mut rng)?;
        let pilots = dft_pilots(config.tau_p(), config.scenario.users)?;
        let blocks = config.blocks();
        let gain = propagation.mean_power_gain();
        let rule = config.estimator.rule();
        let kinds = config.estimator.kinds.clone();

        let mut scenario = Scenario {
            config: config.clone(),
            geometry,
            propagation,
            truth,
            iso,
            quadrature_change,
            users,
            pilots,
            noise_power: config.noise_power(),
            gain,
            blocks,
            subspaces: Vec::new(),
            schedules: Vec::new(),
            assignment: Vec::new(),
            codebook: None,
        };

        if config.optimizer.codebook_size == 0 {
            let schedule = sweep_schedule(seed, &scenario.geometry, blocks);
            let p = scenario.propagation.transmission_matrix(&schedule)?;
            scenario
                .subspaces
                .push(Subspaces::new(p, &scenario.truth, &scenario.iso, rule)?);
            scenario.schedules.push(schedule);
            scenario.assignment = kinds.iter().map(|&k| (k, 0)).collect();
        } else {
            let budget = scenario.budget(0, config.optimizer_snr_db())?;
            let ctx = CodebookContext {
                propagation: &scenario.propagation,
                truth: &scenario.truth,
                iso: &scenario.iso,
                rule,
                budget,
                blocks,
            };
            let book = codebook_optimize(config.optimizer.codebook_size, &kinds, &ctx, seed)?;
            let mut picked: Vec<usize> = book.selected.iter().map(|&(_, i)| i).collect();
            picked.sort_unstable();
            picked.dedup();
            for &i in &picked {
                let p = scenario.propagation.transmission_matrix(&book.schedules[i])?;
                scenario
                    .subspaces
                    .push(Subspaces::new(p, &scenario.truth, &scenario.iso, rule)?);
                scenario.schedules.push(book.schedules[i].clone());
            }
            scenario.assignment = book
                .selected
                .iter()
                .map(|&(k, i)| (k, picked.binary_search(&i).expect("picked")))
                .collect();
            scenario.codebook = Some(book);
        }
        Ok(scenario)
    }

    pub fn tau_p(&self) -> usize {
        self.pilots.slots()
    }

    /// Link budget of user `user` (0-based) at `snr_db`.
    pub fn budget(&self, user: usize, snr_db: f64) -> Result<LinkBudget> {
        let ue = self.users.get(user).ok_or(Error::IndexOutOfRange {
            what: "user",
            index: user,
            len: self.users.len(),
        })?;
        let tau_p = self.tau_p();
        Ok(LinkBudget {
            path_loss: ue.path_loss,
            pilot_power: pilot_power_for_snr(snr_db, ue.path_loss, self.noise_power, tau_p, self.gain)?,
            noise_power: self.noise_power,
            tau_p,
        })
    }

    pub fn subspaces_for(&self, kind: EstimatorKind) -> Option<&Subspaces> {
        self.assignment
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|&(_, i)| &self.subspaces[i])
    }

    /// Closed-form error at `snr_db` on the schedule assigned to `kind`.
    pub fn theory(&self, kind: EstimatorKind, snr_db: f64) -> Result<MseReport> {
        let s = self
            .subspaces_for(kind)
            .ok_or_else(|| Error::InvalidArgument(format!("estimator {kind} is not configured")))?;
        s.report(&self.truth, &self.budget(0, snr_db)?)
    }

    /// Estimator operator for the first user; user `k` applies it scaled by
    /// `sqrt(p_1 / p_k)` since `p_k beta_k` is fixed at a given SNR.
    fn operator(&self, kind: EstimatorKind, s: &Subspaces, budget: &LinkBudget) -> Result<CMatrix> {
        let (p, tau) = (budget.pilot_power, budget.tau_p);
        match kind {
            EstimatorKind::Ls => ls_operator(&s.p, p, tau),
            EstimatorKind::Rsls => rsls_operator(&s.p, &s.basis, p, tau),
            EstimatorKind::RslsIso => rsls_operator(&s.p, &s.iso_basis, p, tau),
            EstimatorKind::Mmse => mmse_operator(
                s.p.matrix(),
                self.truth.matrix(),
                budget.path_loss,
                p,
                budget.noise_power,
                tau,
            ),
        }
    }

    /// Monte Carlo NMSE for each `(estimator, schedule)` pair at each SNR,
    /// averaged over `trials` training windows of all users. Channel and
    /// noise draws depend only on `(seed, trial, user)` and are shared by
    /// every SNR point and estimator. Returns `[snr][pair]`.
    pub fn monte_carlo(
        &self,
        pairs: &[(EstimatorKind, &Subspaces)],
        snr_db: &[f64],
        trials: usize,
        seed: u64,
    ) -> Result<Vec<Vec<f64>>> {
        if trials == 0 {
            return Err(Error::InvalidArgument("at least one trial is required".into()));
        }
        let n = self.geometry.atoms_per_layer;
        let tau = self.tau_p() as f64;
        let reference = &self.budget(0, 0.0)?;
        let mut ops = Vec::with_capacity(snr_db.len());
        let mut signal_scale = Vec::with_capacity(snr_db.len());
        for &snr in snr_db {
            let b = self.budget(0, snr)?;
            ops.push(
                pairs
                    .iter()
                    .map(|&(kind, s)| self.operator(kind, s, &b))
                    .collect::<Result<Vec<_>>>()?,
            );
            // tau_p sqrt(p_k beta_k), the same for every user at this SNR.
            signal_scale.push(tau * (b.pilot_power * b.path_loss).sqrt());
        }
        let noise_scale = (tau * self.noise_power).sqrt();
        // sqrt(p_1 / p_k) relative scale of each user's operator.
        let user_scale: Vec<f64> = self
            .users
            .iter()
            .map(|u| (u.path_loss / reference.path_loss).sqrt())
            .collect();
        let rows = pairs[0].1.p.observations();
        let mut distinct: Vec<&Subspaces> = Vec::new();
        let schedule_of: Vec<usize> = pairs
            .iter()
            .map(|&(_, s)| match distinct.iter().position(|d| std::ptr::eq(*d, s)) {
                Some(i) => i,
                None => {
                    distinct.push(s);
                    distinct.len() - 1
                }
            })
            .collect();

        let per_trial: Vec<Vec<f64>> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut acc = vec![0.0; snr_db.len() * pairs.len()];
                for (k, &scale_k) in user_scale.iter().enumerate() {
                    let mut rng_h = stream(seed, Purpose::Channel, &[t as u64, k as u64]);
                    let mut rng_n = stream(seed, Purpose::Noise, &[t as u64, k as u64]);
                    // Unit-path-loss channel; errors are normalized by beta_k N.
                    let h = self.truth.sqrt() * complex_normal_vector(&mut rng_h, n, 1.0);
                    let w = complex_normal_vector(&mut rng_n, rows, 1.0);
                    let ph: Vec<_> = distinct.iter().map(|s| s.p.matrix() * &h).collect();
                    let beta_sqrt = self.users[k].path_loss.sqrt();
                    for (i, op_row) in ops.iter().enumerate() {
                        for (j, op) in op_row.iter().enumerate() {
                            let y =
                                &ph[schedule_of[j]] * C64::new(signal_scale[i], 0.0) + &w * C64::new(noise_scale, 0.0);
                            // h_hat / sqrt(beta_k) compared with the unit channel.
                            let est = op * y * C64::new(scale_k / beta_sqrt, 0.0);
                            acc[i * pairs.len() + j] += (est - &h).norm_squared() / n as f64;
                        }
                    }
                }
                acc
            })
            .collect();

        let samples = (trials * self.users.len()) as f64;
        let mut total = vec![0.0; snr_db.len() * pairs.len()];
        for acc in &per_trial {
            for (t, a) in total.iter_mut().zip(acc) {
                *t += a;
            }
        }
        Ok(total
            .chunks(pairs.len())
            .map(|row| row.iter().map(|x| x / samples).collect())
            .collect())
    }

    /// Runs the configured sweep.
    pub fn sweep(&self) -> Result<Vec<ResultRow>> {
        let started = Instant::now();
        let cfg = &self.config;
        let pairs: Vec<(EstimatorKind, &Subspaces)> =
            self.assignment.iter().map(|&(k, i)| (k, &self.subspaces[i])).collect();
        info!(
            "{}: {} SNR points x {} estimators, {} trials",
            cfg.name,
            cfg.sweep.snr_db.len(),
            pairs.len(),
            cfg.sweep.trials
        );
        let mc = self.monte_carlo(&pairs, &cfg.sweep.snr_db, cfg.sweep.trials, cfg.sweep.seed)?;
        let wall_ms = if cfg.sweep.timing {
            started.elapsed().as_millis() as u64
        } else {
            0
        };
        let mut rows = Vec::new();
        for (i, &snr) in cfg.sweep.snr_db.iter().enumerate() {
            for (j, &(kind, s)) in pairs.iter().enumerate() {
                let report = s.report(&self.truth, &self.budget(0, snr)?)?;
                rows.push(ResultRow {
                    scenario: cfg.name.clone(),
                    estimator: kind,
                    snr_db: snr,
                    nmse_mc: mc[i][j],
                    nmse_theory: report.nmse(kind),
                    trials: cfg.sweep.trials,
                    eta: report.eta(kind),
                    seed: cfg.sweep.seed,
                    wall_ms,
                });
            }
        }
        Ok(rows)
    }
}

/// Builds the scenario for `config` and runs its sweep.
pub fn run_sweep(config: &ScenarioConfig) -> Result<Vec<ResultRow>> {
    Scenario::build(config)?.sweep()
}
