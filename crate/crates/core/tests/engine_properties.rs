use proptest::prelude::*;
use vdeffuant::engine::{read_binary_events, run, BinaryEventLog, Engine, EventMode, LatticeState, StopCondition};
use vdeffuant::particles::{derive, level_parity};
use vdeffuant::rng::{replicate_seed, stream_rng, Stream};
use vdeffuant::{InitSpec, LatticeSpec, ModelParams, OpinionProfile, Rational, Scalar};

fn config(issues: u32, bits: &[u64]) -> Vec<OpinionProfile> {
    let mask = if issues == 64 { u64::MAX } else { (1u64 << issues) - 1 };
    bits.iter().map(|&b| OpinionProfile::new(b & mask, issues).unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coupling_survives_random_runs(
        issues in 1u32..=8,
        theta_frac in 0.0f64..=1.0,
        bits in proptest::collection::vec(any::<u64>(), 3..24),
        ring in any::<bool>(),
        rejection_free in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let theta = (theta_frac * f64::from(issues)).round() as u32;
        let params = ModelParams::deffuant(issues, theta).unwrap();
        let lattice = if ring { LatticeSpec::ring(bits.len()) } else { LatticeSpec::interval(bits.len()) }.unwrap();
        let state = LatticeState::new(params, lattice, config(issues, &bits)).unwrap();
        let mode = if rejection_free { EventMode::RejectionFree } else { EventMode::Faithful };
        let mut engine = Engine::new(state, stream_rng(seed, Stream::Dynamics), mode).with_audit(true);
        let mut total = engine.view().total_particles();
        let mut parity: Vec<u32> = (0..issues).map(|i| level_parity(engine.view(), i)).collect();
        for _ in 0..400 {
            let Some(ev) = engine.step() else { break };
            let now = engine.view().total_particles();
            prop_assert!(now <= total);
            prop_assert_eq!(total - now, if ev.annihilated { 2 } else if ev.active && ev.landing.is_none() { 1 } else { 0 });
            if ev.active {
                prop_assert!(ev.pile <= theta && ev.pile >= 1);
            }
            let boundary = ev.edge.is_some_and(|e| lattice.is_boundary_edge(e));
            let now_parity: Vec<u32> = (0..issues).map(|i| level_parity(engine.view(), i)).collect();
            if !boundary {
                prop_assert_eq!(&now_parity, &parity);
            }
            if ring {
                prop_assert!(now_parity.iter().all(|&b| b == 0));
            }
            parity = now_parity;
            total = now;
        }
        prop_assert_eq!(&derive(engine.state()), engine.view());
    }

    #[test]
    fn absorbed_states_have_no_live_edges(issues in 2u32..=6, seed in any::<u64>()) {
        let params = ModelParams::deffuant(issues, 1).unwrap();
        let lattice = LatticeSpec::ring(12).unwrap();
        let mut engine = Engine::from_seed(params, lattice, &InitSpec::Uniform, seed, EventMode::RejectionFree).unwrap();
        let summary = run(&mut engine, &StopCondition::absorption(2_000_000), &mut ());
        prop_assert!(engine.view().is_absorbed() || summary.outcome == vdeffuant::RunOutcome::Truncated);
        if engine.view().is_absorbed() {
            prop_assert_eq!(engine.view().live_edges(), 0);
            prop_assert!(engine.step().is_none());
        }
    }
}

#[test]
fn identical_seeds_give_identical_logs() {
    let params = ModelParams::deffuant(5, 2).unwrap();
    let lattice = LatticeSpec::ring(40).unwrap();
    let log_of = |seed: u64| {
        let mut engine = Engine::from_seed(params, lattice, &InitSpec::Uniform, seed, EventMode::Faithful).unwrap();
        let mut log = BinaryEventLog::new(Vec::new());
        run(&mut engine, &StopCondition::after_events(5_000), &mut log);
        log.finish().unwrap()
    };
    let a = log_of(7);
    assert_eq!(a, log_of(7));
    assert_ne!(a, log_of(8));
    assert_eq!(read_binary_events(a.as_slice()).unwrap().len(), 5_000);
}

#[test]
fn biased_start_is_reproducible() {
    let params = ModelParams::deffuant(3, 1).unwrap();
    let lattice = LatticeSpec::ring(30).unwrap();
    let init = InitSpec::Biased { rho: Rational::ratio(1, 16) };
    let a = Engine::from_seed(params, lattice, &init, 3, EventMode::Faithful).unwrap();
    let b = Engine::from_seed(params, lattice, &init, 3, EventMode::Faithful).unwrap();
    assert_eq!(a.state(), b.state());
}

/// Faithful and rejection-free runs must agree in law. Compare the mean number
/// of surviving particles and active jumps at a fixed time.
#[test]
fn rejection_free_matches_faithful_in_law() {
    let params = ModelParams::deffuant(4, 2).unwrap();
    let lattice = LatticeSpec::ring(16).unwrap();
    let reps = 3_000u64;
    let collect = |mode: EventMode, master: u64| {
        let mut particles = Vec::new();
        let mut active = Vec::new();
        for k in 0..reps {
            let seed = replicate_seed(master, k);
            let mut engine = Engine::from_seed(params, lattice, &InitSpec::Uniform, seed, mode).unwrap();
            let s = run(&mut engine, &StopCondition::at_time(3.0), &mut ());
            particles.push(engine.view().total_particles() as f64);
            active.push(s.active_events as f64);
        }
        (particles, active)
    };
    let (pf, af) = collect(EventMode::Faithful, 1);
    let (pr, ar) = collect(EventMode::RejectionFree, 2);
    for (x, y, what) in [(&pf, &pr, "particles"), (&af, &ar, "active jumps")] {
        let z = two_sample_z(x, y);
        assert!(z.abs() < 4.0, "{what}: z = {z}");
    }
}

fn two_sample_z(x: &[f64], y: &[f64]) -> f64 {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64], m: f64| v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (v.len() - 1) as f64;
    let (mx, my) = (mean(x), mean(y));
    (mx - my) / (var(x, mx) / x.len() as f64 + var(y, my) / y.len() as f64).sqrt()
}

/// Every qualifying arrow is active with probability `r(j)`.
#[test]
fn activation_frequency_matches_rate() {
    for params in [ModelParams::deffuant(4, 2).unwrap(), ModelParams::axelrod(4, 4).unwrap()] {
        let lattice = LatticeSpec::ring(64).unwrap();
        let mut seen = [0u64; 5];
        let mut fired = [0u64; 5];
        for k in 0..20 {
            let mut engine =
                Engine::from_seed(params, lattice, &InitSpec::Uniform, replicate_seed(5, k), EventMode::Faithful)
                    .unwrap();
            for _ in 0..100_000 {
                let ev = engine.step().unwrap();
                if ev.occupied {
                    seen[ev.pile as usize] += 1;
                    fired[ev.pile as usize] += u64::from(ev.active);
                }
            }
        }
        for j in 1..=4u32 {
            let r = vdeffuant::rate::<f64>(&params, j);
            let n = seen[j as usize] as f64;
            if n < 1_000.0 {
                continue;
            }
            let freq = fired[j as usize] as f64 / n;
            let sigma = (r * (1.0 - r) / n).sqrt().max(1e-12);
            assert!((freq - r).abs() <= 4.0 * sigma, "{:?} j={j}: {freq} vs {r}", params.dynamics());
        }
    }
}

#[test]
fn uniform_initial_particles_per_edge() {
    // F = 4: one edge carries Binomial(4, 1/2) particles
    let params = ModelParams::deffuant(4, 2).unwrap();
    let lattice = LatticeSpec::ring(100_000).unwrap();
    let engine = Engine::from_seed(params, lattice, &InitSpec::Uniform, 11, EventMode::Faithful).unwrap();
    let mean = engine.view().total_particles() as f64 / 100_000.0;
    // consecutive edges are independent under the uniform measure
    let sigma = (1.0f64 / 100_000.0).sqrt();
    assert!((mean - 2.0).abs() < 3.0 * sigma, "{mean}");
}

#[test]
fn frozen_start_never_moves() {
    let params = ModelParams::deffuant(3, 1).unwrap();
    let lattice = LatticeSpec::ring(64).unwrap();
    let bits: Vec<u64> = (0..64).map(|x| if x % 2 == 0 { 0 } else { 7 }).collect();
    let state = LatticeState::new(params, lattice, config(3, &bits)).unwrap();
    let mut engine = Engine::new(state, stream_rng(1, Stream::Dynamics), EventMode::Faithful);
    let s = run(&mut engine, &StopCondition::absorption(10), &mut ());
    assert_eq!(s.outcome, vdeffuant::RunOutcome::FixatedFrozen);
    assert_eq!(s.events, 0);
    assert_eq!(engine.view().blockades(), 64);
}
