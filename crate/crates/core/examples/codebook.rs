//! Random codebook search over phase schedules, scored by closed-form error.

use simest::correlation::CorrelationModel;
use simest::estimators::{EstimatorKind, RankRule};
use simest::geometry::SystemGeometry;
use simest::performance::{codebook_optimize, pilot_power_for_snr, CodebookContext, LinkBudget};
use simest::propagation::{min_blocks, BsNumerator, Propagation};

fn main() -> simest::Result<()> {
    let g = SystemGeometry::reference(4, 4, 36)?;
    let prop = Propagation::new(&g, BsNumerator::default())?;
    let r = CorrelationModel::isotropic(&g)?;
    let (beta, noise, tau) = (1.2e-7, 3.98e-14, 4);
    let ctx = CodebookContext {
        propagation: &prop,
        truth: &r,
        iso: &r,
        rule: RankRule::default(),
        budget: LinkBudget {
            path_loss: beta,
            pilot_power: pilot_power_for_snr(20.0, beta, noise, tau, prop.mean_power_gain())?,
            noise_power: noise,
            tau_p: tau,
        },
        blocks: min_blocks(&g),
    };
    let book = codebook_optimize(64, &EstimatorKind::ALL, &ctx, 7)?;
    for &k in &EstimatorKind::ALL {
        let i = book.selected_index(k).expect("every kind is scored");
        println!(
            "{:>8}: candidate {i:>2} at {:7.2} dB, median {:7.2} dB",
            k.name(),
            10.0 * book.reports[i].nmse(k).log10(),
            10.0 * book.median_nmse(k).log10()
        );
    }
    Ok(())
}
