//! Multi-block uplink training: DFT pilots, the slot-level received signal,
//! per-user matched filtering, and the equivalent stacked observation
//! `y = tau_p sqrt(p) P h + n` drawn directly.

use std::f64::consts::TAU;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, C64};
use crate::propagation::{PhaseSchedule, Propagation};
use crate::rng::complex_normal_vector;

/// Hermitian-orthogonal pilot sequences, one column per user.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBook {
    sequences: CMatrix,
}

/// `s_{k,t} = exp(j 2 pi (k-1)(t-1) / tau_p)`, the first `users` columns of
/// the `tau_p`-point DFT matrix.
pub fn dft_pilots(tau_p: usize, users: usize) -> Result<PilotBook> {
    if users == 0 || tau_p < users {
        return Err(Error::PilotLength { tau_p, users });
    }
    let sequences = CMatrix::from_fn(tau_p, users, |t, k| {
        // Reduce the index product first so large books stay exact.
        let phase = ((k * t) % tau_p) as f64 / tau_p as f64;
        C64::from_polar(1.0, TAU * phase)
    });
    Ok(PilotBook { sequences })
}

impl PilotBook {
    pub fn slots(&self) -> usize {
        self.sequences.nrows()
    }

    pub fn users(&self) -> usize {
        self.sequences.ncols()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.sequences
    }

    /// Pilot of user `k` (0-based).
    pub fn sequence(&self, k: usize) -> CVector {
        self.sequences.column(k).into_owned()
    }

    pub fn gram(&self) -> CMatrix {
        self.sequences.adjoint() * &self.sequences
    }
}

/// Received samples over a training window: one `M x tau_p` matrix per block,
/// entry `(m, t)` is antenna `m` in slot `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct UplinkSignals {
    pub blocks: Vec<CMatrix>,
}

impl UplinkSignals {
    pub fn zeros(antennas: usize, blocks: usize, slots: usize) -> Self {
        Self {
            blocks: vec![CMatrix::zeros(antennas, slots); blocks],
        }
    }

    /// I.i.d. `CN(0, noise_power)` samples in every slot.
    pub fn noise<R: Rng + ?Sized>(antennas: usize, blocks: usize, slots: usize, noise_power: f64, rng: &mut R) -> Self {
        Self {
            blocks: (0..blocks)
                .map(|_| {
                    let v = complex_normal_vector(rng, antennas * slots, noise_power);
                    CMatrix::from_column_slice(antennas, slots, v.as_slice())
                })
                .collect(),
        }
    }

    pub fn antennas(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.nrows())
    }

    pub fn slots(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.ncols())
    }

    pub fn add(&mut self, other: &UplinkSignals) -> Result<()> {
        if self.blocks.len() != other.blocks.len()
            || self
                .blocks
                .iter()
                .zip(&other.blocks)
                .any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::Dimension("uplink signal shapes differ".into()));
        }
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            *a += b;
        }
        Ok(())
    }
}

fn check_users(channels: &[CVector], powers: &[f64], pilots: &PilotBook, atoms: usize) -> Result<()> {
    if channels.len() != powers.len() || channels.len() != pilots.users() {
        return Err(Error::Dimension(format!(
            "{} channels, {} powers, {} pilots",
            channels.len(),
            powers.len(),
            pilots.users()
        )));
    }
    if let Some(h) = channels.iter().find(|h| h.len() != atoms) {
        return Err(Error::Dimension(format!(
            "channel of length {} for {atoms} atoms",
            h.len()
        )));
    }
    if let Some(p) = powers.iter().find(|p| !(**p >= 0.0)) {
        return Err(Error::InvalidArgument(format!("pilot power {p} must be >= 0")));
    }
    Ok(())
}

/// Noise-free slot samples `w_m^H G_psi^H sum_k h_k sqrt(p_k) s_{k,t}`, with
/// the channels held fixed over all blocks.
pub fn uplink_signal(
    propagation: &Propagation,
    schedule: &PhaseSchedule,
    channels: &[CVector],
    powers: &[f64],
    pilots: &PilotBook,
) -> Result<UplinkSignals> {
    check_users(channels, powers, pilots, propagation.geometry().atoms_per_layer)?;
    let mut out = Vec::with_capacity(schedule.num_blocks());
    for block in 0..schedule.num_blocks() {
        let g = propagation.sim_response(schedule, block)?;
        let to_antennas = propagation.bs() * g.adjoint();
        let mut y = CMatrix::zeros(propagation.geometry().num_antennas, pilots.slots());
        for (k, (h, &p)) in channels.iter().zip(powers).enumerate() {
            let received = &to_antennas * h * C64::new(p.sqrt(), 0.0);
            y += received * pilots.sequence(k).transpose();
        }
        out.push(y);
    }
    Ok(UplinkSignals { blocks: out })
}

/// Slot-level uplink over the training window with receiver noise of power
/// `noise_power` per sample.
#[allow(clippy::too_many_arguments)]
pub fn simulate_uplink<R: Rng + ?Sized>(
    propagation: &Propagation,
    schedule: &PhaseSchedule,
    channels: &[CVector],
    powers: &[f64],
    pilots: &PilotBook,
    noise_power: f64,
    rng: &mut R,
) -> Result<UplinkSignals> {
    if !(noise_power >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise power {noise_power} must be >= 0"
        )));
    }
    let mut signals = uplink_signal(propagation, schedule, channels, powers, pilots)?;
    let noise = UplinkSignals::noise(
        signals.antennas(),
        schedule.num_blocks(),
        pilots.slots(),
        noise_power,
        rng,
    );
    signals.add(&noise)?;
    Ok(signals)
}

/// Correlates every antenna's slot sequence with `s_k^H` and stacks the
/// per-block outputs into a length `blocks * M` vector.
pub fn matched_filter_and_stack(signals: &UplinkSignals, pilots: &PilotBook, user: usize) -> Result<CVector> {
    if user >= pilots.users() {
        return Err(Error::IndexOutOfRange {
            what: "user",
            index: user,
            len: pilots.users(),
        });
    }
    if signals.slots() != pilots.slots() {
        return Err(Error::Dimension(format!(
            "{} slots received, pilots span {}",
            signals.slots(),
            pilots.slots()
        )));
    }
    let filter = pilots.sequence(user).map(|z| z.conj());
    let m = signals.antennas();
    let mut stacked = CVector::zeros(m * signals.blocks.len());
    for (b, y) in signals.blocks.iter().enumerate() {
        stacked.rows_mut(b * m, m).copy_from(&(y * &filter));
    }
    Ok(stacked)
}

/// `tau_p sqrt(p) P h + noise` for a given stacked noise vector.
pub fn observation_with_noise(p: &CMatrix, h: &CVector, power: f64, tau_p: usize, noise: &CVector) -> Result<CVector> {
    if p.ncols() != h.len() || p.nrows() != noise.len() {
        return Err(Error::Dimension(format!(
            "P is {}x{}, h has {}, noise has {}",
            p.nrows(),
            p.ncols(),
            h.len(),
            noise.len()
        )));
    }
    Ok(p * h * C64::new(tau_p as f64 * power.sqrt(), 0.0) + noise)
}

/// Stacked observation with `CN(0, tau_p noise_power I)` noise drawn
/// directly; statistically identical to filtering the slot-level signal.
pub fn fast_path_observation<R: Rng + ?Sized>(
    p: &CMatrix,
    h: &CVector,
    power: f64,
    tau_p: usize,
    noise_power: f64,
    rng: &mut R,
) -> Result<CVector> {
    let noise = complex_normal_vector(rng, p.nrows(), tau_p as f64 * noise_power);
    observation_with_noise(p, h, power, tau_p, &noise)
}
