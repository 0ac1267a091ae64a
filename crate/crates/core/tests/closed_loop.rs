use neural_mpc::sweep::{run_config, zero_residual};
use neural_mpc::{Mode, OcpConfig};

fn ocp(mode: Mode) -> OcpConfig {
    OcpConfig {
        mode,
        ..OcpConfig::double_integrator_default()
    }
}

#[test]
fn zero_network_matches_nominal_in_both_modes() {
    let cycles = 60;
    let base = run_config(&ocp(Mode::Rtn), None, cycles, 10.0).unwrap();
    for mode in [Mode::Rtn, Mode::Naive] {
        let run = run_config(&ocp(mode), Some(zero_residual(2, 8, 3).unwrap()), cycles, 10.0).unwrap();
        assert_eq!(run.commands.len(), cycles);
        let diff = run
            .commands
            .iter()
            .zip(&base.commands)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-8, "{mode:?}: {diff}");
    }
}

#[test]
fn evaluation_counts_follow_the_mode() {
    let n = 10u64;
    let rtn = run_config(&ocp(Mode::Rtn), Some(zero_residual(1, 4, 0).unwrap()), 3, 10.0).unwrap();
    let c = rtn.counts[2];
    assert_eq!((c.net_batches, c.net_batch_points), (1, n));
    let naive = run_config(&ocp(Mode::Naive), Some(zero_residual(1, 4, 0).unwrap()), 3, 10.0).unwrap();
    let c = naive.counts[2];
    assert_eq!((c.net_value, c.net_jacobian), (4 * n, 4 * n));
}

#[test]
fn tracker_follows_the_sine() {
    let run = run_config(&ocp(Mode::Rtn), None, 300, 10.0).unwrap();
    assert!(run.commands.iter().all(|u| u.is_finite() && u.abs() <= 20.0 + 1e-9));
}
