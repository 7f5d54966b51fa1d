//! Pilot runs behind the persistence thresholds.
//!
//! `cargo run --release --example pilot -- [MASTER_SEED ...]` prints, for each
//! master seed, the blockade survival and the fraction of replicates whose
//! origin ancestry did not move between t = 1000 and t = 2000, for the
//! coexistence cell (F=9, theta=2) and the clustering control (F=2, theta=1).
//! `PILOT_SITES` sets the ring size (default 2048); `PILOT_FAITHFUL=1` samples
//! every clock ring instead of active arrows only.

use vdeffuant::rng::replicate_seed;
use vdeffuant_cli::config::{ExperimentConfig, ModeArg, Settings};
use vdeffuant_cli::experiments::{persistence, replicate_map};

fn main() {
    let seeds: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("seed")).collect();
    let seeds = if seeds.is_empty() { vec![1, 2, 3, 4, 5] } else { seeds };
    let sites: usize = std::env::var("PILOT_SITES").ok().and_then(|s| s.parse().ok()).unwrap_or(2048);
    println!("master_seed,F,theta,sites,replicates,blockade_survival,stabilised_fraction,mean_d1000,mean_d2000");
    for &master in &seeds {
        for (f, t) in [(9, 2), (2, 1)] {
            let s = Settings {
                issues: Some(f),
                theta: Some(t),
                sites: Some(sites),
                t_max: Some(2000.0),
                replicates: Some(32),
                seed: Some(master),
                mode: Some(if std::env::var("PILOT_FAITHFUL").is_ok() {
                    ModeArg::Faithful
                } else {
                    ModeArg::RejectionFree
                }),
                ..Settings::default()
            };
            let cfg = ExperimentConfig::from_settings(&s).unwrap();
            let reps = replicate_map(cfg.replicates, |k| {
                persistence(&cfg, replicate_seed(master, k), &[1000.0, 2000.0]).unwrap()
            });
            let n = reps.len() as f64;
            let survival = reps.iter().filter_map(|p| p.blockade_survival).sum::<f64>() / n;
            let stable = reps.iter().filter(|p| p.displacement[0] == p.displacement[1]).count() as f64 / n;
            let d1 = reps.iter().map(|p| p.displacement[0] as f64).sum::<f64>() / n;
            let d2 = reps.iter().map(|p| p.displacement[1] as f64).sum::<f64>() / n;
            println!("{master},{f},{t},{sites},32,{survival:.4},{stable:.4},{d1:.1},{d2:.1}");
        }
    }
}
