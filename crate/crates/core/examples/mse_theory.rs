//! Closed-form estimation error against SNR for one schedule, with the
//! ordering the estimators must respect.

use simest::correlation::CorrelationModel;
use simest::estimators::{EstimatorKind, RankRule};
use simest::geometry::SystemGeometry;
use simest::performance::{pilot_power_for_snr, LinkBudget, Subspaces};
use simest::propagation::{min_blocks, BsNumerator, PhaseSchedule, Propagation};
use simest::rng::{stream, Purpose};

fn main() -> simest::Result<()> {
    let g = SystemGeometry::reference(5, 6, 100)?;
    let prop = Propagation::new(&g, BsNumerator::default())?;
    let schedule = PhaseSchedule::random(6, 100, min_blocks(&g), &mut stream(1, Purpose::Schedule, &[]));
    let r = CorrelationModel::isotropic(&g)?;
    let subs = Subspaces::new(prop.transmission_matrix(&schedule)?, &r, &r, RankRule::default())?;
    let (beta, noise, tau) = (1.2e-7, 3.98e-14, 5);

    println!("snr_db     mmse       ls     rsls rsls_iso   ordering");
    for snr_db in (-20..=60).step_by(10).map(f64::from) {
        let budget = LinkBudget {
            path_loss: beta,
            pilot_power: pilot_power_for_snr(snr_db, beta, noise, tau, prop.mean_power_gain())?,
            noise_power: noise,
            tau_p: tau,
        };
        let report = subs.report(&r, &budget)?;
        let cells: Vec<String> = EstimatorKind::ALL
            .iter()
            .map(|&k| format!("{:8.2}", 10.0 * report.nmse(k).log10()))
            .collect();
        println!(
            "{snr_db:>6} {} {:>10}",
            cells.join(" "),
            if report.ordering.holds() { "ok" } else { "VIOLATED" }
        );
    }
    let report = subs.report(
        &r,
        &LinkBudget {
            path_loss: beta,
            pilot_power: 1.0,
            noise_power: noise,
            tau_p: tau,
        },
    )?;
    println!(
        "eta {} of {}, relative bias {:.1e}",
        report.eta, report.observations, report.bias
    );
    Ok(())
}
