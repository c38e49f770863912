//! Slot-level uplink training for several users at once. After matched
//! filtering, each user's stacked observation carries only its own channel.

use simest::channel::{db_to_linear, path_loss, PATH_LOSS_EXPONENT, REFERENCE_PATH_LOSS_DB};
use simest::correlation::CorrelationModel;
use simest::geometry::SystemGeometry;
use simest::linalg::{relative_error_vec, C64};
use simest::pilot::{dft_pilots, matched_filter_and_stack, uplink_signal};
use simest::propagation::{min_blocks, BsNumerator, PhaseSchedule, Propagation};
use simest::rng::{complex_normal_vector, stream, Purpose};

fn main() -> simest::Result<()> {
    let users = 4;
    let g = SystemGeometry::reference(4, 3, 16)?;
    let prop = Propagation::new(&g, BsNumerator::default())?;
    let schedule = PhaseSchedule::random(3, 16, min_blocks(&g), &mut stream(2, Purpose::Schedule, &[]));
    let r = CorrelationModel::isotropic(&g)?;
    let pilots = dft_pilots(users, users)?;
    println!(
        "{} blocks x {} slots = {} training slots",
        schedule.num_blocks(),
        pilots.slots(),
        schedule.num_blocks() * pilots.slots()
    );

    let mut rng = stream(2, Purpose::Channel, &[]);
    let distances = [18.0, 25.0, 31.0, 40.0];
    let betas: Vec<f64> = distances
        .iter()
        .map(|&d| path_loss(d, db_to_linear(REFERENCE_PATH_LOSS_DB), PATH_LOSS_EXPONENT))
        .collect::<simest::Result<_>>()?;
    let channels: Vec<_> = betas
        .iter()
        .map(|&b| r.sqrt() * complex_normal_vector(&mut rng, 16, b))
        .collect();
    let powers = [0.2, 0.1, 0.05, 0.4];

    let signals = uplink_signal(&prop, &schedule, &channels, &powers, &pilots)?;
    let p = prop.transmission_matrix(&schedule)?;
    for k in 0..users {
        let got = matched_filter_and_stack(&signals, &pilots, k)?;
        let own = p.matrix() * &channels[k] * C64::new(users as f64 * powers[k].sqrt(), 0.0);
        println!(
            "user {k} at {:>4} m: leakage from other users {:.1e}",
            distances[k],
            relative_error_vec(&got, &own)
        );
    }
    Ok(())
}
