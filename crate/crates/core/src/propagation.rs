//! Deterministic wave propagation through the stacked metasurface.
//!
//! Inter-layer and BS-to-layer coupling follow the Rayleigh–Sommerfeld
//! point-to-point coefficient
//!
//! ```text
//! w(d) = (d_x d_y d_layer / d^2) * (1 / (2 pi d) - j / lambda) * exp(j 2 pi d / lambda)
//! ```
//!
//! Block indices (`psi`) are 0-based; layer indices inside a [`PhaseSchedule`]
//! are 0-based as well (`0` is the layer nearest the BS).

use std::f64::consts::{PI, TAU};

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SystemGeometry;
use crate::linalg::{self, CMatrix, SortedSvd, C64};

/// Condition number of `P` above which estimates are flagged as unreliable.
pub const CONDITION_WARNING: f64 = 1e8;

/// Which axial length enters the numerator of the BS-to-layer-1 coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BsNumerator {
    /// Keep `d_layer`, i.e. substitute only the distance into the
    /// inter-layer formula.
    #[default]
    LayerSpacing,
    /// Use the BS-to-layer-1 gap `d_t` instead.
    AxialGap,
}

/// `w(d)` for an arbitrary axial numerator length.
fn coefficient(d: f64, axial: f64, geometry: &SystemGeometry) -> Result<C64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::NonPositiveDistance(d));
    }
    let lambda = geometry.wavelength;
    let amplitude = geometry.atom_length * geometry.atom_width * axial / (d * d);
    let near_far = C64::new(1.0 / (2.0 * PI * d), -1.0 / lambda);
    let phase = C64::from_polar(1.0, TAU * d / lambda);
    Ok(near_far * phase * amplitude)
}

/// Rayleigh–Sommerfeld coefficient between two meta-atoms `d` meters apart.
pub fn diffraction_coefficient(d: f64, geometry: &SystemGeometry) -> Result<C64> {
    coefficient(d, geometry.layer_spacing, geometry)
}

/// `W^l` for any `l >= 2`. All layers are congruent, so the matrix is the same
/// for every `l`.
pub fn inter_layer_matrix(geometry: &SystemGeometry, layer: usize) -> Result<CMatrix> {
    if layer < 2 || layer > geometry.num_layers {
        return Err(Error::IndexOutOfRange {
            what: "inter-layer matrix layer (needs a predecessor)",
            index: layer,
            len: geometry.num_layers,
        });
    }
    build_inter_layer(geometry)
}

fn build_inter_layer(geometry: &SystemGeometry) -> Result<CMatrix> {
    let n = geometry.atoms_per_layer;
    let mut w = CMatrix::zeros(n, n);
    for row in 0..n {
        for col in row..n {
            let d = geometry.inter_layer_distance(row + 1, col + 1)?;
            let value = diffraction_coefficient(d, geometry)?;
            w[(row, col)] = value;
            w[(col, row)] = value;
        }
    }
    Ok(w)
}

/// `W_bs` (M x N): row `m` is `w_m^H`, the conjugated coefficients from
/// antenna `m` to every atom of layer 1.
pub fn bs_matrix(geometry: &SystemGeometry, numerator: BsNumerator) -> Result<CMatrix> {
    let axial = match numerator {
        BsNumerator::LayerSpacing => geometry.layer_spacing,
        BsNumerator::AxialGap => geometry.bs_to_layer1,
    };
    let (m, n) = (geometry.num_antennas, geometry.atoms_per_layer);
    let mut out = CMatrix::zeros(m, n);
    for row in 0..m {
        for col in 0..n {
            let d = geometry.bs_distance(col + 1, row + 1)?;
            out[(row, col)] = coefficient(d, axial, geometry)?.conj();
        }
    }
    Ok(out)
}

/// Per-block, per-layer, per-atom phase shifts in `[0, 2 pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSchedule {
    num_layers: usize,
    atoms_per_layer: usize,
    num_blocks: usize,
    /// `[block][layer][atom]`, row-major.
    phases: Vec<f64>,
}

impl PhaseSchedule {
    pub fn new(num_layers: usize, atoms_per_layer: usize, num_blocks: usize, phases: Vec<f64>) -> Result<Self> {
        let expected = num_layers * atoms_per_layer * num_blocks;
        if phases.len() != expected {
            return Err(Error::Schedule(format!(
                "expected {num_layers} x {atoms_per_layer} x {num_blocks} = {expected} phases, got {}",
                phases.len()
            )));
        }
        if let Some(bad) = phases.iter().find(|p| !(0.0..TAU).contains(*p)) {
            return Err(Error::Schedule(format!("phase {bad} outside [0, 2pi)")));
        }
        Ok(Self {
            num_layers,
            atoms_per_layer,
            num_blocks,
            phases,
        })
    }

    /// Every phase drawn i.i.d. uniform on `[0, 2 pi)`.
    pub fn random<R: Rng + ?Sized>(num_layers: usize, atoms_per_layer: usize, num_blocks: usize, rng: &mut R) -> Self {
        let phases = (0..num_layers * atoms_per_layer * num_blocks)
            .map(|_| rng.random_range(0.0..TAU))
            .collect();
        Self {
            num_layers,
            atoms_per_layer,
            num_blocks,
            phases,
        }
    }

    pub fn constant(num_layers: usize, atoms_per_layer: usize, num_blocks: usize, phase: f64) -> Result<Self> {
        Self::new(
            num_layers,
            atoms_per_layer,
            num_blocks,
            vec![phase; num_layers * atoms_per_layer * num_blocks],
        )
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn atoms_per_layer(&self) -> usize {
        self.atoms_per_layer
    }

    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// Phases of one layer in one block.
    pub fn layer(&self, block: usize, layer: usize) -> &[f64] {
        let start = (block * self.num_layers + layer) * self.atoms_per_layer;
        &self.phases[start..start + self.atoms_per_layer]
    }

    fn check_against(&self, geometry: &SystemGeometry) -> Result<()> {
        if self.num_layers != geometry.num_layers || self.atoms_per_layer != geometry.atoms_per_layer {
            return Err(Error::Schedule(format!(
                "schedule is {} layers x {} atoms, geometry is {} x {}",
                self.num_layers, self.atoms_per_layer, geometry.num_layers, geometry.atoms_per_layer
            )));
        }
        Ok(())
    }
}

/// Default number of training blocks, `ceil(N / M)`.
pub fn min_blocks(geometry: &SystemGeometry) -> usize {
    geometry.atoms_per_layer.div_ceil(geometry.num_antennas)
}

fn unit_phasors(phases: &[f64]) -> Vec<C64> {
    phases.iter().map(|&t| C64::from_polar(1.0, t)).collect()
}

/// The geometry-derived propagation constants `W` and `W_bs`, computed once
/// and shared by every schedule.
#[derive(Debug, Clone)]
pub struct Propagation {
    geometry: SystemGeometry,
    inter_layer: CMatrix,
    bs: CMatrix,
}

impl Propagation {
    pub fn new(geometry: &SystemGeometry, numerator: BsNumerator) -> Result<Self> {
        geometry.validate()?;
        Ok(Self {
            geometry: geometry.clone(),
            inter_layer: build_inter_layer(geometry)?,
            bs: bs_matrix(geometry, numerator)?,
        })
    }

    pub fn geometry(&self) -> &SystemGeometry {
        &self.geometry
    }

    pub fn inter_layer(&self) -> &CMatrix {
        &self.inter_layer
    }

    pub fn bs(&self) -> &CMatrix {
        &self.bs
    }

    /// `G_psi = Phi^L W ... Phi^2 W Phi^1` for one block.
    pub fn sim_response(&self, schedule: &PhaseSchedule, block: usize) -> Result<CMatrix> {
        schedule.check_against(&self.geometry)?;
        if block >= schedule.num_blocks() {
            return Err(Error::IndexOutOfRange {
                what: "block",
                index: block,
                len: schedule.num_blocks(),
            });
        }
        let first = unit_phasors(schedule.layer(block, 0));
        let mut g = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(first));
        for layer in 1..schedule.num_layers() {
            g = &self.inter_layer * g;
            for (mut row, phasor) in g.row_iter_mut().zip(unit_phasors(schedule.layer(block, layer))) {
                row *= phasor;
            }
        }
        Ok(g)
    }

    /// `W_bs G_psi^H`, evaluated right-to-left on the thin `M x N` side.
    fn block_rows(&self, schedule: &PhaseSchedule, block: usize) -> CMatrix {
        let w_h = self.inter_layer.adjoint();
        let mut x = self.bs.clone();
        for layer in 0..schedule.num_layers() {
            let phasors = unit_phasors(schedule.layer(block, layer));
            for (mut col, phasor) in x.column_iter_mut().zip(phasors) {
                col *= phasor.conj();
            }
            if layer + 1 < schedule.num_layers() {
                x = &x * &w_h;
            }
        }
        x
    }

    /// Stacks `W_bs G_psi^H` over all blocks of `schedule` into `P`.
    pub fn transmission_matrix(&self, schedule: &PhaseSchedule) -> Result<TransmissionMatrix> {
        schedule.check_against(&self.geometry)?;
        let m = self.geometry.num_antennas;
        let n = self.geometry.atoms_per_layer;
        let rows = schedule.num_blocks() * m;
        if rows < n {
            return Err(Error::Estimability(format!(
                "{} blocks x {m} antennas = {rows} observations < {n} unknowns",
                schedule.num_blocks()
            )));
        }
        let mut p = CMatrix::zeros(rows, n);
        for block in 0..schedule.num_blocks() {
            p.rows_mut(block * m, m).copy_from(&self.block_rows(schedule, block));
        }
        Ok(TransmissionMatrix::from_matrix(p))
    }

    /// Mean per-antenna power gain `E ||W_bs G^H||_F^2 / M` over i.i.d.
    /// uniform phases. With independent uniform phases the cross terms vanish,
    /// so the column energies propagate through `|W|^2` entrywise.
    pub fn mean_power_gain(&self) -> f64 {
        let n = self.geometry.atoms_per_layer;
        let mut energy: Vec<f64> = (0..n)
            .map(|col| self.bs.column(col).iter().map(|z| z.norm_sqr()).sum())
            .collect();
        for _ in 1..self.geometry.num_layers {
            energy = (0..n)
                .map(|row| {
                    (0..n)
                        .map(|col| self.inter_layer[(row, col)].norm_sqr() * energy[col])
                        .sum()
                })
                .collect();
        }
        energy.iter().sum::<f64>() / self.geometry.num_antennas as f64
    }
}

/// The stacked end-to-end map `P` from the last-layer channel to the
/// matched-filter observations, with its SVD-derived quantities.
#[derive(Debug, Clone)]
pub struct TransmissionMatrix {
    p: CMatrix,
    svd: SortedSvd,
    pinv: CMatrix,
    rank: usize,
}

impl TransmissionMatrix {
    pub fn from_matrix(p: CMatrix) -> Self {
        let svd = linalg::svd(&p);
        let tol = linalg::default_rank_tolerance(p.nrows(), p.ncols(), svd.sigma_max());
        let rank = svd.rank(tol);
        let pinv = svd.pseudo_inverse(tol);
        let tm = Self { p, svd, pinv, rank };
        if tm.is_ill_conditioned() {
            warn!(
                "transmission matrix condition number {:.3e} exceeds {:.0e}",
                tm.condition_number(),
                CONDITION_WARNING
            );
        }
        tm
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.p
    }

    /// Moore–Penrose pseudo-inverse `P^+` (the inverse when `P` is square).
    pub fn pinv(&self) -> &CMatrix {
        &self.pinv
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.svd.singular_values
    }

    pub fn condition_number(&self) -> f64 {
        self.svd.condition_number()
    }

    pub fn is_ill_conditioned(&self) -> bool {
        self.condition_number() > CONDITION_WARNING
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn observations(&self) -> usize {
        self.p.nrows()
    }

    pub fn unknowns(&self) -> usize {
        self.p.ncols()
    }

    /// Fails unless `P` has full column rank.
    pub fn ensure_full_column_rank(&self) -> Result<()> {
        if self.rank < self.unknowns() {
            return Err(Error::Estimability(format!(
                "P has numerical rank {} < {} columns",
                self.rank,
                self.unknowns()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius, relative_error};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> SystemGeometry {
        SystemGeometry::reference(2, 3, 9).unwrap()
    }

    #[test]
    fn coefficient_magnitude_at_layer_spacing() {
        // Oracle evaluated by hand from the closed form: lambda = 10.714 mm,
        // d_x = d_y = lambda / 8, d = d_layer = 5 lambda / 6.
        let g = SystemGeometry::reference(5, 6, 100).unwrap();
        let w = diffraction_coefficient(g.layer_spacing, &g).unwrap();
        assert_relative_eq!(w.norm(), 1.909e-2, max_relative = 1e-3);
        let lam = g.wavelength;
        let d = g.layer_spacing;
        let expected = lam * lam / 64.0 * d / (d * d) * ((1.0 / (2.0 * PI * d)).powi(2) + 1.0 / (lam * lam)).sqrt();
        assert_relative_eq!(w.norm(), expected, max_relative = 1e-12);
    }

    #[test]
    fn exponential_factor_is_periodic_in_wavelength() {
        let g = small();
        let lam = g.wavelength;
        let w = diffraction_coefficient(lam, &g).unwrap();
        let prefactor =
            g.atom_length * g.atom_width * g.layer_spacing / (lam * lam) * C64::new(1.0 / (2.0 * PI * lam), -1.0 / lam);
        assert!((w - prefactor).norm() < 1e-12 * prefactor.norm());
    }

    #[test]
    fn doubling_distance_scales_magnitude_between_quarter_and_eighth() {
        let g = small();
        for k in 1..200 {
            let d = g.layer_spacing * (1.0 + k as f64 * 0.05);
            let ratio =
                diffraction_coefficient(2.0 * d, &g).unwrap().norm() / diffraction_coefficient(d, &g).unwrap().norm();
            assert!((0.125..=0.25).contains(&ratio), "ratio {ratio} at d = {d}");
        }
    }

    #[test]
    fn rejects_non_positive_distance() {
        let g = small();
        assert!(matches!(
            diffraction_coefficient(0.0, &g),
            Err(Error::NonPositiveDistance(_))
        ));
        assert!(diffraction_coefficient(-1.0, &g).is_err());
    }

    #[test]
    fn inter_layer_matrix_structure() {
        let g = SystemGeometry::reference(5, 4, 16).unwrap();
        let w = inter_layer_matrix(&g, 2).unwrap();
        let diag = w[(0, 0)];
        for i in 0..16 {
            assert_eq!(w[(i, i)], diag);
            for j in 0..16 {
                assert_eq!(w[(i, j)], w[(j, i)]);
            }
        }
        // Brute-force double loop straight from coordinates.
        let mut sum = 0.0;
        for n in 1..=16 {
            for np in 1..=16 {
                let a = g.atom_position(2, n).unwrap();
                let b = g.atom_position(1, np).unwrap();
                let d = (a - b).norm();
                sum += diffraction_coefficient(d, &g).unwrap().norm_sqr();
            }
        }
        assert_relative_eq!(frobenius(&w), sum.sqrt(), max_relative = 1e-12);
        assert!(inter_layer_matrix(&g, 1).is_err());
        assert!(inter_layer_matrix(&g, 5).is_err());
    }

    #[test]
    fn bs_matrix_peaks_at_center_atom() {
        let mut g = SystemGeometry::reference(1, 2, 25).unwrap();
        g.num_antennas = 1;
        let wb = bs_matrix(&g, BsNumerator::LayerSpacing).unwrap();
        let center = 12;
        for col in 0..25 {
            assert!(wb[(0, col)].norm().is_finite() && wb[(0, col)].norm() > 0.0);
            if col != center {
                assert!(wb[(0, center)].norm() > wb[(0, col)].norm());
            }
        }
    }

    #[test]
    fn mirrored_antennas_permute_rows() {
        let g = SystemGeometry::reference(4, 2, 9).unwrap();
        let wb = bs_matrix(&g, BsNumerator::LayerSpacing).unwrap();
        // Antenna m mirrors to M + 1 - m; atom columns mirror about x = 0.
        let side = 3;
        for m in 0..4 {
            for n in 0..9 {
                let (row, col) = (n / side, n % side);
                let mirrored = row * side + (side - 1 - col);
                assert!((wb[(m, n)] - wb[(3 - m, mirrored)]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn axial_gap_numerator_rescales_bs_matrix() {
        let mut g = small();
        g.bs_to_layer1 = 2.0 * g.layer_spacing;
        let literal = bs_matrix(&g, BsNumerator::LayerSpacing).unwrap();
        let gap = bs_matrix(&g, BsNumerator::AxialGap).unwrap();
        assert!(relative_error(&gap, &(literal * C64::new(2.0, 0.0))) < 1e-14);
    }

    #[test]
    fn single_layer_response_is_the_phase_mask() {
        let g = SystemGeometry::reference(1, 1, 4).unwrap();
        let prop = Propagation::new(&g, BsNumerator::default()).unwrap();
        let schedule = PhaseSchedule::new(1, 4, 1, vec![0.1, 1.0, 2.0, 3.0]).unwrap();
        let resp = prop.sim_response(&schedule, 0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j {
                    C64::from_polar(1.0, schedule.phases()[i])
                } else {
                    C64::new(0.0, 0.0)
                };
                assert_eq!(resp[(i, j)], expected);
            }
        }
    }

    #[test]
    fn zero_phases_give_power_of_w() {
        let g = SystemGeometry::reference(2, 3, 9).unwrap();
        let prop = Propagation::new(&g, BsNumerator::default()).unwrap();
        let schedule = PhaseSchedule::constant(3, 9, 2, 0.0).unwrap();
        let w = prop.inter_layer();
        let expected = w * w;
        for block in 0..2 {
            let resp = prop.sim_response(&schedule, block).unwrap();
            assert!(relative_error(&resp, &expected) < 1e-14);
        }
    }

    #[test]
    fn transmission_blocks_match_explicit_products() {
        let g = SystemGeometry::reference(3, 4, 9).unwrap();
        let prop = Propagation::new(&g, BsNumerator::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let schedule = PhaseSchedule::random(4, 9, 3, &mut rng);
        let tm = prop.transmission_matrix(&schedule).unwrap();
        for block in 0..3 {
            let expected = prop.bs() * prop.sim_response(&schedule, block).unwrap().adjoint();
            let got = tm.matrix().rows(block * 3, 3).into_owned();
            assert!(relative_error(&got, &expected) < 1e-12);
        }
        // Deterministic rebuild.
        let again = prop.transmission_matrix(&schedule).unwrap();
        assert_eq!(tm.matrix(), again.matrix());
    }

    #[test]
    fn single_square_block() {
        let g = SystemGeometry::reference(4, 2, 4).unwrap();
        let prop = Propagation::new(&g, BsNumerator::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let schedule = PhaseSchedule::random(2, 4, 1, &mut rng);
        let tm = prop.transmission_matrix(&schedule).unwrap();
        let expected = prop.bs() * prop.sim_response(&schedule, 0).unwrap().adjoint();
        assert!(relative_error(tm.matrix(), &expected) < 1e-13);
    }

    #[test]
    fn common_first_layer_phase_is_a_global_phase() {
        let g = SystemGeometry::reference(3, 3, 9).unwrap();
        let prop = Propagation::new(&g, BsNumerator::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = PhaseSchedule::random(3, 9, 3, &mut rng);
        let shift = 0.7;
        let mut phases = base.phases().to_vec();
        for block in 0..3 {
            for atom in 0..9 {
                let idx = (block * 3) * 9 + atom;
                phases[idx] = (phases[idx] + shift).rem_euclid(TAU);
            }
        }
        let shifted = PhaseSchedule::new(3, 9, 3, phases).unwrap();
        let g0 = prop.sim_response(&base, 1).unwrap();
        let g1 = prop.sim_response(&shifted, 1).unwrap();
        assert!(relative_error(&g1, &(g0 * C64::from_polar(1.0, shift))) < 1e-12);
        let s0 = prop.transmission_matrix(&base).unwrap();
        let s1 = prop.transmission_matrix(&shifted).unwrap();
        for (a, b) in s0.singular_values().iter().zip(s1.singular_values()) {
            assert_relative_eq!(*a, *b, max_relative = 1e-10);
        }
    }

    #[test]
    fn reference_setup_has_twenty_blocks_and_full_rank() {
        let g = SystemGeometry::reference(5, 6, 100).unwrap();
        assert_eq!(min_blocks(&g), 20);
        let prop = Propagation::new(&g, BsNumerator::default()).unwrap();
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let schedule = PhaseSchedule::random(6, 100, 20, &mut rng);
            let tm = prop.transmission_matrix(&schedule).unwrap();
            assert_eq!(tm.matrix().shape(), (100, 100));
            assert_eq!(tm.rank(), 100);
            assert!(!tm.is_ill_conditioned());
        }
    }

    #[test]
    fn too_few_blocks_is_an_estimability_error() {
        let g = SystemGeometry::reference(5, 2, 25).unwrap();
        let prop = Propagation::new(&g, BsNumerator::default()).unwrap();
        let schedule = PhaseSchedule::constant(2, 25, 4, 0.0).unwrap();
        assert!(matches!(
            prop.transmission_matrix(&schedule),
            Err(Error::Estimability(_))
        ));
    }

    #[test]
    fn schedule_validation() {
        assert!(PhaseSchedule::new(1, 2, 1, vec![0.0, TAU]).is_err());
        assert!(PhaseSchedule::new(1, 2, 1, vec![0.0, -0.1]).is_err());
        assert!(PhaseSchedule::new(1, 2, 2, vec![0.0, 1.0]).is_err());
        let g = small();
        let prop = Propagation::new(&g, BsNumerator::default()).unwrap();
        let wrong = PhaseSchedule::constant(2, 9, 5, 0.0).unwrap();
        assert!(prop.transmission_matrix(&wrong).is_err());
        let ok = PhaseSchedule::constant(3, 9, 5, 0.0).unwrap();
        assert!(prop.sim_response(&ok, 5).is_err());
    }

    #[test]
    fn mean_power_gain_matches_sampled_average() {
        let g = SystemGeometry::reference(2, 3, 16).unwrap();
        let prop = Propagation::new(&g, BsNumerator::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 400;
        let blocks = 8;
        let mut acc = 0.0;
        for _ in 0..draws {
            let schedule = PhaseSchedule::random(3, 16, blocks, &mut rng);
            let p = prop.transmission_matrix(&schedule).unwrap();
            acc += frobenius(p.matrix()).powi(2) / (blocks * 2) as f64;
        }
        let empirical = acc / draws as f64;
        assert_relative_eq!(empirical, prop.mean_power_gain(), max_relative = 0.03);
    }
}
