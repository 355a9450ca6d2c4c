mod common;

use netloc::frequency::{assemble_second_order, hinf_norm};
use netloc::graph::build_laplacian;
use netloc::perturbation::{scenario_vectors, Scenario};
use netloc::simulate::{
    energy, oscillation_frequency, simulate, simulate_many, simulate_with_verdict, DeltaSpec, Growth, SimConfig,
};
use netloc::smallgain::{delay_destabilizer, growth_sim_config};
use netloc::Exec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_config(seed: u64, n: usize, scenario: usize, delta_kind: usize) -> SimConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = common::random_connected(&mut rng, n, n / 2);
    let lap = build_laplacian(&g);
    let s = common::scenarios_for(&mut rng, &g)[scenario];
    let pv = scenario_vectors(&s, &lap).unwrap();
    let gain = rng.random_range(-0.5..0.5);
    let delta = match delta_kind {
        0 => DeltaSpec::StaticReal { gain },
        1 => DeltaSpec::Delay {
            gain,
            t: rng.random_range(0.2..2.0),
        },
        _ => DeltaSpec::AllPass {
            gain,
            a: rng.random_range(0.2..3.0),
        },
    };
    SimConfig {
        lap,
        beta: rng.random_range(0.05..1.0),
        pv: Some(pv),
        delta,
        theta0: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        omega0: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        h: 0.0,
        t_final: 20.0,
        record_every: 1,
    }
    .with_auto_step()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mean_follows_the_zero_mode(seed in any::<u64>(), n in 3usize..15, reciprocal in any::<bool>(), kind in 0usize..3) {
        // Edge is slot 0, LocalReciprocal slot 3.
        let cfg = random_config(seed, n, if reciprocal { 3 } else { 0 }, kind);
        let traj = simulate(&cfg).unwrap();
        prop_assume!(!traj.truncated);
        let (m0, v0) = (mean(&cfg.theta0), mean(&cfg.omega0));
        let b = cfg.beta;
        for (t, (theta, omega)) in traj.state_times().iter().zip(&traj.states) {
            let scale = 1.0 + theta.iter().chain(omega).fold(0.0f64, |a, x| a.max(x.abs()));
            let want = m0 + v0 / b * (1.0 - (-b * t).exp());
            prop_assert!((mean(theta) - want).abs() <= 1e-8 * scale, "t {}: {} vs {}", t, mean(theta), want);
            prop_assert!((mean(omega) - v0 * (-b * t).exp()).abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn nominal_energy_never_increases(seed in any::<u64>(), n in 2usize..15) {
        let mut cfg = random_config(seed, n, 0, 0);
        cfg.delta = DeltaSpec::None;
        let traj = simulate(&cfg).unwrap();
        let e: Vec<f64> = traj.states.iter().map(|(th, om)| energy(&cfg.lap, th, om)).collect();
        for w in e.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-8, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn runs_are_deterministic(seed in any::<u64>(), n in 2usize..10, scenario in 0usize..4, kind in 0usize..3) {
        let cfg = random_config(seed, n, scenario, kind);
        prop_assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
    }
}

#[test]
fn rk4_converges_at_fourth_order() {
    let mut cfg = random_config(7, 8, 0, 0);
    cfg.delta = DeltaSpec::None;
    cfg.t_final = 4.0;
    let h0 = cfg.step_limit();
    let finals: Vec<Vec<f64>> = [1.0, 0.5, 0.25]
        .iter()
        .map(|k| {
            let mut c = cfg.clone();
            c.h = c.t_final / (c.t_final / (h0 * k)).ceil();
            let traj = simulate(&c).unwrap();
            let (th, om) = traj.states.last().unwrap();
            th.iter().chain(om).copied().collect()
        })
        .collect();
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let e1 = diff(&finals[0], &finals[1]);
    let e2 = diff(&finals[1], &finals[2]);
    assert!(e1 > 0.0 && e2 > 0.0);
    let ratio = e1 / e2;
    assert!((12.0..20.0).contains(&ratio), "halving h reduced the change by {ratio:.2}");
    assert!(e1 <= 10.0 * h0.powi(4), "{e1:.3e} vs h^4 = {:.3e}", h0.powi(4));
}

#[test]
fn delayed_feedback_oscillates_at_the_resonance() {
    for seed in [1u64, 2, 3] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_connected(&mut rng, 8, 4);
        let l = build_laplacian(&g);
        let pv = scenario_vectors(&Scenario::GlobalNode { k: 0 }, &l).unwrap();
        let ss = assemble_second_order(&l, &pv, 0.2).unwrap();
        let h = hinf_norm(&ss).unwrap();
        let d = delay_destabilizer(&ss).unwrap();
        let cfg = growth_sim_config(&ss, d.scaled(1.05).delta_spec(), h.omega_bar).unwrap();
        let (traj, v) = simulate_with_verdict(&cfg).unwrap();
        assert_eq!(v.growth, Growth::Growing, "seed {seed}: {v:?}");
        let w = oscillation_frequency(&traj, 0.5).unwrap();
        assert!((w - h.omega_bar).abs() <= 0.02 * h.omega_bar, "seed {seed}: {w} vs {}", h.omega_bar);
    }
}

#[test]
fn sweeps_match_across_executors() {
    let cfgs: Vec<SimConfig> = (0..6u64).map(|s| random_config(s, 6, (s % 4) as usize, (s % 3) as usize)).collect();
    let seq = simulate_many(&cfgs, Exec::Sequential);
    let par = simulate_many(&cfgs, Exec::Parallel);
    for (a, b) in seq.iter().zip(&par) {
        let (ta, va) = a.as_ref().unwrap();
        let (tb, vb) = b.as_ref().unwrap();
        assert_eq!(ta, tb);
        assert_eq!(va, vb);
    }
}
