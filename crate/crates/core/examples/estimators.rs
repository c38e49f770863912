//! One noisy training window pushed through all four estimators.

use simest::correlation::CorrelationModel;
use simest::estimators::{ls_estimate, mmse_estimate, rsls_estimate, rsls_iso_estimate, Estimate, RankRule};
use simest::geometry::SystemGeometry;
use simest::performance::{pilot_power_for_snr, Subspaces};
use simest::pilot::fast_path_observation;
use simest::propagation::{min_blocks, BsNumerator, PhaseSchedule, Propagation};
use simest::rng::{complex_normal_vector, stream, Purpose};

fn main() -> simest::Result<()> {
    let g = SystemGeometry::reference(5, 6, 100)?;
    let prop = Propagation::new(&g, BsNumerator::default())?;
    let schedule = PhaseSchedule::random(6, 100, min_blocks(&g), &mut stream(3, Purpose::Schedule, &[]));
    let p = prop.transmission_matrix(&schedule)?;
    let r = CorrelationModel::isotropic(&g)?;
    let subs = Subspaces::new(p.clone(), &r, &r, RankRule::default())?;

    let (beta, noise, tau) = (1.2e-7, 3.98e-14, 5);
    let mut rng = stream(3, Purpose::Channel, &[]);
    let h = r.sqrt() * complex_normal_vector(&mut rng, 100, beta);
    for snr_db in [0.0, 20.0, 40.0] {
        let power = pilot_power_for_snr(snr_db, beta, noise, tau, prop.mean_power_gain())?;
        let y = fast_path_observation(p.matrix(), &h, power, tau, noise, &mut rng)?;
        let estimates: [Estimate; 4] = [
            mmse_estimate(&y, p.matrix(), r.matrix(), beta, power, noise, tau)?,
            ls_estimate(&y, &p, power, tau)?,
            rsls_estimate(&y, &p, &subs.basis, power, tau)?,
            rsls_iso_estimate(&y, &p, &subs.iso_basis, power, tau)?,
        ];
        let line: Vec<String> = estimates
            .iter()
            .map(|e| {
                format!(
                    "{} {:7.2} dB (rank {})",
                    e.kind,
                    10.0 * ((&e.h - &h).norm_squared() / h.norm_squared()).log10(),
                    e.rank
                )
            })
            .collect();
        println!("{snr_db:>4} dB: {}", line.join(", "));
    }
    Ok(())
}
