//! Spin-up, restart and time-averaging studies on the default configuration.

use parareal_core::solver::SECONDS_PER_DAY;
use parareal_core::FieldName;
use parareal_harness::config::ExperimentConfig;
use parareal_harness::experiment::{restart_consistency_study, time_averaged_study};
use parareal_harness::spinup::{spin_up, spin_up_observed};

#[test]
fn spin_up_energy_settles() {
    let cfg = ExperimentConfig::default();
    let mut daily = Vec::new();
    spin_up_observed(&cfg, 30 * SECONDS_PER_DAY, |t, ke| {
        if t % SECONDS_PER_DAY == 0 {
            daily.push(ke);
        }
    })
    .unwrap();
    assert_eq!(daily.len(), 30);
    let day20 = daily[19];
    assert!(daily.iter().all(|ke| ke.is_finite() && *ke > 0.0));
    for (d, ke) in daily.iter().enumerate().skip(20) {
        let r = ke / day20;
        assert!((0.1..=10.0).contains(&r), "day {}: KE ratio {r}", d + 1);
    }
}

#[test]
fn cold_restart_cost_is_small_on_the_spun_up_state_and_grows_with_splits() {
    let cfg = ExperimentConfig::default();
    let u0 = spin_up(&cfg, cfg.spinup).unwrap();
    let study = restart_consistency_study(&cfg, &u0, cfg.coarse_spd, SECONDS_PER_DAY, &[2, 4, 12]).unwrap();
    assert!(study.rows.iter().all(|r| r.warm == 0.0));
    assert!(study.rows[0].cold > 0.0 && study.rows[0].cold < 1e-3, "{}", study.to_text());
    assert!(study.rows.windows(2).all(|w| w[0].cold < w[1].cold), "{}", study.to_text());
}

#[test]
fn slice_averaged_errors_shrink_with_resolution() {
    let cfg = ExperimentConfig {
        monitored: vec![FieldName::U, FieldName::T],
        ..ExperimentConfig::default()
    };
    let u0 = spin_up(&cfg, cfg.spinup).unwrap();
    let coarse = time_averaged_study(&cfg, &u0, 36, 288).unwrap();
    let finer = time_averaged_study(&cfg, &u0, 72, 288).unwrap();
    for ((f, a), (_, b)) in coarse.iter().zip(&finer) {
        assert_eq!(a.len(), cfg.layout.n_slices());
        // Single slices can pass through a phase-error zero, so compare the
        // series mean and the final slice.
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(b) < mean(a), "{f:?}: {a:?} vs {b:?}");
        assert!(b.last() < a.last(), "{f:?}: {a:?} vs {b:?}");
    }
}
