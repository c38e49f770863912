//! Spatial correlation from angular scattering densities, and how much of
//! the channel energy lives in a few directions.

use simest::correlation::{correlation_quadrature, CorrelationModel, ScatteringFunction};
use simest::geometry::SystemGeometry;
use simest::linalg::svd;

fn effective_rank(model: &CorrelationModel, keep: f64) -> usize {
    let s = svd(model.matrix()).singular_values;
    let total: f64 = s.iter().sum();
    let mut acc = 0.0;
    s.iter()
        .take_while(|&&x| {
            let short = acc < keep * total;
            acc += x;
            short
        })
        .count()
}

fn main() -> simest::Result<()> {
    let g = SystemGeometry::reference(1, 1, 100)?;
    let iso = CorrelationModel::isotropic(&g)?;
    let q = correlation_quadrature(&ScatteringFunction::Isotropic, &g, 128)?;
    let worst = (q.model.matrix() - iso.matrix())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    println!(
        "isotropic quadrature vs sinc: max deviation {worst:.2e}, order-doubling change {:.2e}",
        q.max_change
    );

    let sector = ScatteringFunction::Sector {
        azimuth: (-0.3, 0.3),
        elevation: (-0.2, 0.2),
    };
    let narrow = correlation_quadrature(&sector, &g, 128)?.model;
    for (name, m) in [("isotropic", &iso), ("sector", &narrow)] {
        println!(
            "{name:>9}: trace {:.1}, 99.9% energy in {} of {} directions, clamped mass {:.1e}",
            m.trace(),
            effective_rank(m, 0.999),
            m.dim(),
            m.clamped_mass()
        );
    }
    Ok(())
}
