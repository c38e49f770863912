//! Builds the end-to-end transmission matrix for one random phase schedule
//! and reports how well it can be inverted.

use simest::geometry::SystemGeometry;
use simest::propagation::{min_blocks, BsNumerator, PhaseSchedule, Propagation};
use simest::rng::{stream, Purpose};

fn main() -> simest::Result<()> {
    let g = SystemGeometry::reference(5, 6, 100)?;
    println!(
        "wavelength {:.3} mm, layer spacing {:.3} mm, atom pitch {:.3} mm",
        g.wavelength * 1e3,
        g.layer_spacing * 1e3,
        g.atom_pitch * 1e3
    );
    let prop = Propagation::new(&g, BsNumerator::default())?;
    let blocks = min_blocks(&g);
    let schedule = PhaseSchedule::random(
        g.num_layers,
        g.atoms_per_layer,
        blocks,
        &mut stream(1, Purpose::Schedule, &[]),
    );
    let p = prop.transmission_matrix(&schedule)?;
    println!("P is {} x {} over {blocks} blocks", p.observations(), p.unknowns());
    let sv = p.singular_values();
    println!(
        "largest singular value {:.3e}, smallest {:.3e}",
        sv[0],
        sv[sv.len() - 1]
    );
    println!(
        "condition number {:.3e}, ill-conditioned: {}",
        p.condition_number(),
        p.is_ill_conditioned()
    );
    println!("mean per-entry power gain {:.3e}", prop.mean_power_gain());
    Ok(())
}
