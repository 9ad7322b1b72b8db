//! Simulator against exact ages and its own invariants.

use prio_aoi::closed_form::wq_age;
use prio_aoi::models::build_nq_chain;
use prio_aoi::shs;
use prio_aoi::simulator::{derive_seed, simulate, sweep_simulate, ResumePolicy, SimConfig};
use prio_aoi::{Discipline, Error, SystemConfig};

fn cfg(lambda: f64, mu: f64, streams: usize, d: Discipline) -> SimConfig {
    SimConfig::new(SystemConfig::new(lambda, mu).unwrap(), streams, d)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn single_stream_matches_mm11() {
    let est = simulate(&cfg(1.0, 1.0, 1, Discipline::Wq).with_seed(1)).unwrap();
    assert!(
        rel(est.per_stream_age[0], 2.0) <= 0.02,
        "{}",
        est.per_stream_age[0]
    );
    assert!(!est.non_convergence);
}

#[test]
fn second_stream_matches_exact_ages() {
    let wq = simulate(&cfg(1.0, 1.0, 2, Discipline::Wq).with_seed(2)).unwrap();
    assert!(
        rel(wq.per_stream_age[1], 3.5) <= 0.02,
        "{}",
        wq.per_stream_age[1]
    );
    let nq = simulate(&cfg(1.0, 1.0, 2, Discipline::Nq).with_seed(3)).unwrap();
    assert!(
        rel(nq.per_stream_age[1], 6.5) <= 0.02,
        "{}",
        nq.per_stream_age[1]
    );
}

#[test]
fn same_seed_is_bit_identical() {
    let c = cfg(0.7, 1.3, 3, Discipline::Wq)
        .with_horizon(1e5)
        .with_seed(99);
    let a = simulate(&c).unwrap();
    let b = simulate(&c).unwrap();
    assert_eq!(a, b);
    let other = simulate(&c.clone().with_seed(100)).unwrap();
    assert_ne!(a.per_stream_age, other.per_stream_age);
}

#[test]
fn top_stream_ignores_discipline() {
    let wq = simulate(
        &cfg(0.8, 1.0, 3, Discipline::Wq)
            .with_horizon(1e5)
            .with_seed(7),
    )
    .unwrap();
    let nq = simulate(
        &cfg(0.8, 1.0, 3, Discipline::Nq)
            .with_horizon(1e5)
            .with_seed(7),
    )
    .unwrap();
    assert_eq!(wq.per_stream_age[0], nq.per_stream_age[0]);
    assert!(wq.per_stream_age[2] < nq.per_stream_age[2]);
}

#[test]
fn resume_and_restart_agree_for_exponential_service() {
    // Welch t-test on 30 replications per policy, two-sided 1% level.
    let base = cfg(1.0, 1.0, 3, Discipline::Wq)
        .with_horizon(2e4)
        .with_replications(30);
    let resume = simulate(&base.clone().with_seed(11)).unwrap();
    let restart = simulate(&base.with_seed(12).with_resume(ResumePolicy::Restart)).unwrap();
    for k in 0..3 {
        let diff = resume.per_stream_age[k] - restart.per_stream_age[k];
        let se = resume.stderr[k].hypot(restart.stderr[k]);
        assert!(
            (diff / se).abs() < 2.66,
            "stream {}: t = {}",
            k + 1,
            diff / se
        );
    }
}

#[test]
fn empty_sweep_is_rejected() {
    assert!(matches!(sweep_simulate(&[]), Err(Error::InvalidConfig(_))));
}

#[test]
fn singleton_sweep_equals_simulate() {
    let c = cfg(1.0, 1.0, 2, Discipline::Nq)
        .with_horizon(1e5)
        .with_seed(5);
    let swept = sweep_simulate(std::slice::from_ref(&c)).unwrap();
    assert_eq!(swept, vec![simulate(&c).unwrap()]);
}

#[test]
fn sweep_tracks_top_stream_age() {
    let lambdas = [0.5, 1.0, 2.0];
    let configs: Vec<SimConfig> = lambdas
        .iter()
        .map(|&l| {
            cfg(l, 1.0, 3, Discipline::Wq)
                .with_horizon(2e5)
                .with_seed(21)
        })
        .collect();
    let out = sweep_simulate(&configs).unwrap();
    for ((l, est), (i, c)) in lambdas.iter().zip(&out).zip(configs.iter().enumerate()) {
        let exact = 1.0 / l + 1.0;
        assert!(
            rel(est.per_stream_age[0], exact) <= 0.02,
            "λ={l}: {}",
            est.per_stream_age[0]
        );
        assert_eq!(
            est.replications[0],
            simulate(&c.clone().with_seed(derive_seed(21, i)))
                .unwrap()
                .replications[0]
        );
    }
}

#[test]
fn wq_simulation_matches_closed_form() {
    for (l, m, n) in [(0.3, 1.0, 3), (1.0, 2.0, 3), (0.5, 1.0, 4)] {
        let system = SystemConfig::new(l, m).unwrap();
        let est = simulate(&cfg(l, m, n, Discipline::Wq).with_seed(31)).unwrap();
        for i in 0..n {
            let exact = wq_age(&system, i).unwrap().age;
            let got = est.per_stream_age[i];
            assert!(
                rel(got, exact) <= 0.02,
                "λ={l} μ={m} i={i}: {got} vs {exact}"
            );
        }
    }
}

#[test]
fn nq_simulation_matches_chain() {
    for (l, m, n) in [(0.3, 1.0, 3), (1.0, 2.0, 3), (0.5, 1.0, 4)] {
        let system = SystemConfig::new(l, m).unwrap();
        let est = simulate(&cfg(l, m, n, Discipline::Nq).with_seed(41)).unwrap();
        for i in 0..n {
            let exact = shs::average_age(&build_nq_chain(&system, i).unwrap(), 0).unwrap();
            let got = est.per_stream_age[i];
            assert!(
                rel(got, exact) <= 0.02,
                "λ={l} μ={m} i={i}: {got} vs {exact}"
            );
        }
    }
}
