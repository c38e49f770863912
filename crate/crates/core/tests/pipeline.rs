use simest::correlation::CorrelationModel;
use simest::estimators::EstimatorKind;
use simest::geometry::SystemGeometry;
use simest::harness::{run_sweep, validate_with, Scenario, ScenarioConfig, ValidateOptions};
use simest::linalg::{CMatrix, C64};
use simest::rng::{complex_normal_vector, stream, Purpose};

fn small_config() -> ScenarioConfig {
    ScenarioConfig::from_toml(
        "name = \"pipe\"\n[geometry]\nantennas = 2\nlayers = 3\natoms = 16\n\
         [scenario]\nusers = 3\nplacement = \"random\"\n[sweep]\nsnr_db = [-10.0, 10.0, 30.0]\ntrials = 60\nseed = 4\n",
    )
    .unwrap()
}

#[test]
fn unnormalized_sinc_is_caught_by_validate() {
    fn wrong_sinc(x: f64) -> f64 {
        if x == 0.0 {
            1.0
        } else {
            x.sin() / x
        }
    }
    let opts = ValidateOptions {
        sinc: wrong_sinc,
        mc_trials: 200,
        ..ValidateOptions::default()
    };
    let report = validate_with(&opts).unwrap();
    assert!(!report.passed());
    assert!(!report.check("quadrature_vs_sinc").unwrap().passed);
}

#[test]
fn serial_and_parallel_runs_agree_exactly() {
    let config = small_config();
    let parallel = run_sweep(&config).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let serial = pool.install(|| run_sweep(&config)).unwrap();
    assert_eq!(parallel, serial);
}

#[test]
fn common_random_numbers_across_estimator_subsets() {
    let mut config = small_config();
    let all = run_sweep(&config).unwrap();
    config.estimator.kinds = vec![EstimatorKind::Ls];
    let ls_only = run_sweep(&config).unwrap();
    let ls_rows: Vec<_> = all.iter().filter(|r| r.estimator == EstimatorKind::Ls).collect();
    assert_eq!(ls_rows.len(), ls_only.len());
    for (a, b) in ls_rows.iter().zip(&ls_only) {
        assert_eq!(a.nmse_mc, b.nmse_mc);
    }
}

#[test]
fn fig2a_preset_has_nine_snr_points_for_four_estimators() {
    let mut config = ScenarioConfig::resolve("fig2a").unwrap();
    config.sweep.trials = 5;
    let rows = run_sweep(&config).unwrap();
    assert_eq!(rows.len(), 9 * 4);
    assert!(rows
        .iter()
        .all(|r| r.nmse_mc > 0.0 && r.nmse_theory.is_finite() && r.wall_ms == 0));
    let eta = |k: EstimatorKind| rows.iter().find(|r| r.estimator == k).unwrap().eta;
    assert_eq!(eta(EstimatorKind::Ls), 100);
    assert!(eta(EstimatorKind::Rsls) < 100);
}

#[test]
fn every_preset_builds() {
    for name in simest::harness::PRESETS.iter().map(|(n, _)| *n) {
        let config = ScenarioConfig::resolve(name).unwrap();
        config.validate().unwrap();
        if config.optimizer.codebook_size == 0 {
            Scenario::build(&config).unwrap();
        }
    }
}

#[test]
fn sample_covariance_approaches_the_correlation() {
    let g = SystemGeometry::reference(1, 1, 4).unwrap();
    let model = CorrelationModel::isotropic(&g).unwrap();
    let draws = 40_000;
    let mut acc = CMatrix::zeros(4, 4);
    for t in 0..draws {
        let h = model.sqrt() * complex_normal_vector(&mut stream(5, Purpose::Channel, &[t]), 4, 1.0);
        acc += &h * h.adjoint();
    }
    let err = (acc / C64::new(draws as f64, 0.0) - model.matrix())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    assert!(err <= 5.0 / (draws as f64).sqrt(), "max entry error {err}");
}
