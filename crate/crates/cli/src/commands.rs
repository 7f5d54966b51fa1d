//! One function per subcommand.

use std::fs::File;
use std::io::BufWriter;
use std::time::Instant;

use serde_json::{json, Value};
use vdeffuant::analytics::{
    biased_poly, expected_weight_biased, expected_weight_uniform, folded_bound, phase_region, smallest_positive_root,
    threshold_one_margin, weight_law,
};
use vdeffuant::engine::{BinaryEventLog, CsvEventLog, LatticeState};
use vdeffuant::genealogy::write_probes;
use vdeffuant::opinion::pile_pmf_uniform;
use vdeffuant::rng::{mix_seed, replicate_seed};
use vdeffuant::scalar::{format_fraction, parse_rational};
use vdeffuant::{
    ActiveArrowLog, ArrowEvent, ContributionLedger, FoldVariant, InitSpec, ModelParams, Observer, ParticleView,
    Rational,
};

use crate::config::{
    geometric_grid, init_spec, parse_int_list, ExperimentConfig, LogFormat, Settings, DEFAULT_SAMPLES,
};
use crate::error::CliError;
use crate::experiments::{
    cluster_probability, density_series, engine_for, final_class, initial_statistics, random_probes, sweep_cell, Totals,
};
use crate::output::{dec, exact_pair, write_json, Destination, Provenance};

/// Observers switched on by the `simulate` flags.
struct SimObservers {
    ledger: Option<ContributionLedger>,
    arrows: Option<ActiveArrowLog>,
    csv: Option<CsvEventLog<BufWriter<File>>>,
    binary: Option<BinaryEventLog<BufWriter<File>>>,
}

impl Observer for SimObservers {
    fn observe(&mut self, event: &ArrowEvent, state: &LatticeState, view: &ParticleView) {
        if let Some(l) = &mut self.ledger {
            l.observe(event, view).expect("engine events arrive in time order");
        }
        if let Some(a) = &mut self.arrows {
            a.observe(event, state, view);
        }
        if let Some(c) = &mut self.csv {
            c.observe(event, state, view);
        }
        if let Some(b) = &mut self.binary {
            b.observe(event, state, view);
        }
    }
}

fn create(dest: &Destination, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dest.path(name).ok_or_else(|| CliError::Usage(format!("writing {name} needs --out DIR")))?;
    File::create(&path).map(BufWriter::new).map_err(|e| CliError::io(&path, e))
}

pub fn simulate(settings: &Settings) -> Result<(), CliError> {
    let cfg = ExperimentConfig::from_settings(settings)?;
    let dest = Destination::new(cfg.out.as_deref())?;
    let prov = Provenance::new(cfg.seed, settings);
    let seed = replicate_seed(cfg.seed, 0);
    let started = Instant::now();

    let mut engine = engine_for(&cfg, seed).map_err(CliError::model)?;
    let probes = settings.probes.unwrap_or(0);
    let mut obs = SimObservers {
        ledger: settings.ledger.unwrap_or(false).then(|| ContributionLedger::new(engine.view())),
        arrows: (probes > 0).then(|| ActiveArrowLog::new(cfg.lattice, cfg.params.issues())),
        csv: None,
        binary: None,
    };
    match settings.event_log {
        Some(LogFormat::Csv) => {
            let w = create(&dest, "events.csv")?;
            let path = dest.path("events.csv").unwrap_or_default();
            obs.csv = Some(CsvEventLog::new(w).map_err(|e| CliError::io(&path, e))?);
        }
        Some(LogFormat::Binary) => obs.binary = Some(BinaryEventLog::new(create(&dest, "events.bin")?)),
        None => {}
    }

    let mut totals = Totals::default();
    let series = density_series(&mut engine, &geometric_grid(cfg.t_max), &cfg, &mut totals, &mut obs);
    let class = final_class(&engine, &totals);

    if let Some(c) = obs.csv.take() {
        c.finish().map_err(|e| CliError::io(&dest.path("events.csv").unwrap_or_default(), e))?;
    }
    if let Some(b) = obs.binary.take() {
        b.finish().map_err(|e| CliError::io(&dest.path("events.bin").unwrap_or_default(), e))?;
    }

    dest.write_main("timeseries.csv", |w| {
        prov.write_csv_header(w)?;
        writeln!(w, "time,active_density,frozen_density,blockade_count,consensus_pairs_fraction")?;
        for p in &series {
            writeln!(
                w,
                "{},{},{},{},{}",
                dec(p.time),
                dec(p.active_density),
                dec(p.frozen_density),
                p.blockade_count,
                dec(p.consensus_pairs_fraction)
            )?;
        }
        Ok(())
    })?;

    if let Some(ledger) = &obs.ledger {
        dest.write_aux("ledger.csv", |w| {
            prov.write_csv_header(w)?;
            ledger.write_csv(&mut *w)
        })?;
    }
    if settings.snapshot.unwrap_or(false) {
        dest.write_aux("snapshot.csv", |w| {
            prov.write_csv_header(w)?;
            engine.view().write_snapshot(&mut *w)
        })?;
    }
    if let Some(log) = &obs.arrows {
        let list = random_probes(log, probes, engine.clock(), seed);
        dest.write_aux("probes.csv", |w| {
            prov.write_csv_header(w)?;
            write_probes(&list, &mut *w)
        })?;
    }

    let view = engine.view();
    let summary = prov.wrap_json(json!({
        "replicate_seed": seed,
        "final_class": class.to_string(),
        "final_clock": engine.clock(),
        "events": totals.events,
        "active_events": totals.active_events,
        "annihilations": totals.annihilations,
        "final_particles": view.total_particles(),
        "final_live_particles": view.live_particles(),
        "final_blockades": view.blockades(),
    }));
    // wall time lives apart from the summary so repeated runs stay byte-identical
    let timing = json!({ "wall_seconds": started.elapsed().as_secs_f64() });
    match dest.dir() {
        Some(_) => {
            dest.write_aux("summary.json", |w| write_json(w, &summary))?;
            dest.write_aux("timing.json", |w| write_json(w, &timing))?;
        }
        None => {
            let mut stderr = std::io::stderr().lock();
            let _ = write_json(&mut stderr, &summary);
        }
    }
    Ok(())
}

pub fn cluster_prob(settings: &Settings) -> Result<(), CliError> {
    let cfg = ExperimentConfig::from_settings(settings)?;
    let dest = Destination::new(cfg.out.as_deref())?;
    let prov = Provenance::new(cfg.seed, settings);
    let distances = settings.distances.clone().unwrap_or_else(|| vec![1]);
    let times = settings.times.clone().unwrap_or_else(|| geometric_grid(cfg.t_max));
    if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(CliError::Usage(format!("observation time {t} is not a finite nonnegative number")));
    }
    if distances.contains(&0) {
        return Err(CliError::Usage("distances must be at least 1".into()));
    }
    let rows = cluster_probability(&cfg, &distances, &times).map_err(CliError::model)?;
    dest.write_main("cluster_prob.csv", |w| {
        prov.write_csv_header(w)?;
        writeln!(w, "distance,time,estimate,std_error,replicates")?;
        for r in &rows {
            writeln!(w, "{},{},{},{},{}", r.distance, dec(r.time), dec(r.estimate), dec(r.std_error), r.replicates)?;
        }
        Ok(())
    })
}

/// One `(F, theta, rho)` cell of a sweep.
#[derive(Clone, Debug)]
pub struct Cell {
    pub issues: u32,
    pub theta: u32,
    pub rho: Option<String>,
}

/// Cells in row order: `F` outermost, then `theta`, then `rho`.
pub fn sweep_cells(settings: &Settings) -> Result<Vec<Cell>, CliError> {
    let fs = match &settings.f_values {
        Some(text) => parse_int_list(text)?,
        None => settings.issues.into_iter().collect(),
    };
    let thetas = match &settings.theta_values {
        Some(text) => Some(parse_int_list(text)?),
        None => settings.theta.map(|t| vec![t]),
    };
    let rhos: Vec<Option<String>> = match &settings.rho_values {
        Some(list) => list.iter().map(|r| Some(r.clone())).collect(),
        None => vec![settings.rho.clone()],
    };
    let mut cells = Vec::new();
    for &f in &fs {
        let row: Vec<u32> = thetas.clone().unwrap_or_else(|| (1..f).collect());
        for &t in &row {
            for r in &rhos {
                cells.push(Cell { issues: f, theta: t, rho: r.clone() });
            }
        }
    }
    Ok(cells)
}

/// Seed of a sweep cell; depends on the master seed and the cell's own parameters only.
pub fn cell_seed(master: u64, cell: &Cell) -> u64 {
    let rho_words: Vec<u64> = cell.rho.as_deref().unwrap_or("").bytes().map(u64::from).collect();
    let rho_key = mix_seed(0, &rho_words);
    mix_seed(master, &[u64::from(cell.issues), u64::from(cell.theta), rho_key])
}

fn exact_weight(issues: u32, theta: u32, init: &InitSpec) -> Result<Rational, vdeffuant::ModelError> {
    match init {
        InitSpec::Uniform => expected_weight_uniform::<Rational>(issues, theta),
        InitSpec::Biased { rho } => expected_weight_biased::<Rational>(issues, theta, rho),
    }
}

/// Computes one sweep row; `Err` carries the status message.
fn sweep_row(settings: &Settings, cell: &Cell, seed: u64) -> Result<Vec<String>, String> {
    let mut s = settings.clone();
    s.issues = Some(cell.issues);
    s.theta = Some(cell.theta);
    s.rho = cell.rho.clone();
    s.seed = Some(seed);
    if cell.rho.is_none() {
        s.init = None;
    }
    let cfg = ExperimentConfig::from_settings(&s).map_err(|e| e.to_string())?;
    let region = phase_region(cell.issues, cell.theta).map_err(|e| e.to_string())?;
    let weight = exact_weight(cell.issues, cell.theta, &cfg.init).map_err(|e| e.to_string())?;
    let (frac, decimal) = exact_pair(&weight);
    let stats = sweep_cell(&cfg).map_err(|e| e.to_string())?;
    let status = if stats.truncated > 0 { format!("truncated:{}", stats.truncated) } else { "ok".into() };
    Ok(vec![
        region.to_string(),
        frac,
        decimal,
        dec(stats.blockade_survival),
        dec(stats.final_particle_density),
        cfg.replicates.to_string(),
        seed.to_string(),
        status,
    ])
}

pub fn sweep(settings: &Settings) -> Result<(), CliError> {
    let master = settings.seed.unwrap_or(crate::config::DEFAULT_SEED);
    let dest = Destination::new(settings.out.as_deref())?;
    let prov = Provenance::new(master, settings);
    let cells = sweep_cells(settings)?;
    let mut rows = Vec::with_capacity(cells.len());
    for cell in &cells {
        let seed = cell_seed(master, cell);
        let rho = cell.rho.as_deref().and_then(parse_rational).map(|q| format_fraction(&q)).unwrap_or_default();
        let mut row = vec![cell.issues.to_string(), cell.theta.to_string(), rho];
        match sweep_row(settings, cell, seed) {
            Ok(body) => row.extend(body),
            Err(msg) => {
                row.extend(std::iter::repeat_n(String::new(), 6));
                row.push(seed.to_string());
                row.push(format!("error: {}", msg.replace(',', ";")));
            }
        }
        rows.push(row.join(","));
    }
    dest.write_main("sweep.csv", |w| {
        prov.write_csv_header(w)?;
        writeln!(
            w,
            "F,theta,rho,phase_region,expected_weight,expected_weight_decimal,blockade_survival,final_particle_density,replicates,seed,status"
        )?;
        for r in &rows {
            writeln!(w, "{r}")?;
        }
        Ok(())
    })
}

pub fn stats(settings: &Settings) -> Result<(), CliError> {
    let issues = settings.issues.unwrap_or(crate::config::DEFAULT_ISSUES);
    let init = init_spec(settings.init, settings.rho.as_deref(), issues)?;
    let seed = settings.seed.unwrap_or(crate::config::DEFAULT_SEED);
    let samples = settings.samples.unwrap_or(DEFAULT_SAMPLES);
    let dest = Destination::new(settings.out.as_deref())?;
    let prov = Provenance::new(seed, settings);
    let checks = initial_statistics(&init, issues, samples, seed).map_err(CliError::model)?;
    dest.write_main("stats.csv", |w| {
        prov.write_csv_header(w)?;
        writeln!(w, "statistic,key,samples,count,expected,std_dev,z_score")?;
        for c in &checks {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                c.statistic,
                c.key,
                samples,
                c.count,
                dec(c.expected),
                dec(c.std_dev),
                dec(c.z_score())
            )?;
        }
        Ok(())
    })
}

fn exact_json(q: &Rational) -> Value {
    let (f, d) = exact_pair(q);
    json!({ "exact": f, "decimal": d })
}

/// The exact tables of the `weights` command as one JSON document.
pub fn weights_report(issues: u32, theta: u32, rho: Option<&Rational>) -> Result<Value, vdeffuant::ModelError> {
    ModelParams::deffuant(issues, theta)?;
    let law = weight_law::<Rational>(issues, theta)?;
    let mut piles = Vec::new();
    for j in 0..=issues {
        let atoms: Vec<Value> =
            law.atoms(j).iter().map(|(w, q)| json!({ "weight": w, "probability": exact_json(q) })).collect();
        piles.push(json!({
            "j": j,
            "probability": exact_json(&pile_pmf_uniform::<Rational>(issues, j)?),
            "weight_law": atoms,
            "conditional_mean": exact_json(&law.conditional_mean(j)),
        }));
    }
    let mut doc = json!({
        "F": issues,
        "theta": theta,
        "phase_region": phase_region(issues, theta)?.to_string(),
        "piles": piles,
        "expected_weight": exact_json(&expected_weight_uniform::<Rational>(issues, theta)?),
        "sharp_fold": exact_json(&folded_bound::<Rational>(issues, theta, FoldVariant::Sharp)?),
        "weak_fold": exact_json(&folded_bound::<Rational>(issues, theta, FoldVariant::Weak)?),
    });
    if (issues, theta) == (3, 1) {
        let m = threshold_one_margin::<Rational>();
        doc["threshold_one"] = json!({
            "neighbour_probability": exact_json(&m.neighbour_probability),
            "left_only": exact_json(&m.left_only),
            "right_only": exact_json(&m.right_only),
            "both": exact_json(&m.both),
            "pairing_one": exact_json(&m.pairing_one),
            "pairing_two": exact_json(&m.pairing_two),
            "blockade_formation": exact_json(&m.blockade_formation),
            "margin": exact_json(&m.margin),
        });
    }
    let poly = biased_poly::<Rational>(issues, theta)?;
    doc["biased_poly"] = json!({
        "c0": exact_json(&poly.c0),
        "c1": exact_json(&poly.c1),
        "c2": exact_json(&poly.c2),
        "smallest_positive_root": smallest_positive_root(&poly),
    });
    if let Some(rho) = rho {
        doc["biased_expected_weight"] = json!({
            "rho": format_fraction(rho),
            "value": exact_json(&expected_weight_biased::<Rational>(issues, theta, rho)?),
        });
    }
    Ok(doc)
}

pub fn weights(settings: &Settings) -> Result<(), CliError> {
    let issues = settings.issues.unwrap_or(crate::config::DEFAULT_ISSUES);
    let theta = settings.theta.unwrap_or(crate::config::DEFAULT_THETA.min(issues));
    let rho = match settings.rho.as_deref() {
        Some(text) => Some(parse_rational(text).ok_or_else(|| CliError::Usage(format!("cannot parse rho '{text}'")))?),
        None => None,
    };
    let dest = Destination::new(settings.out.as_deref())?;
    let prov = Provenance::new(settings.seed.unwrap_or(crate::config::DEFAULT_SEED), settings);
    let doc = prov.wrap_json(weights_report(issues, theta, rho.as_ref()).map_err(CliError::model)?);
    dest.write_main("weights.json", |w| write_json(w, &doc))
}

pub fn phase(settings: &Settings) -> Result<(), CliError> {
    if settings.f_values.is_none() && settings.issues.is_none() {
        return Err(CliError::Usage("phase needs --F or --f-values".into()));
    }
    // a single F without a threshold lists every threshold below it
    let cells = sweep_cells(settings)?;
    let dest = Destination::new(settings.out.as_deref())?;
    let prov = Provenance::new(settings.seed.unwrap_or(crate::config::DEFAULT_SEED), settings);
    let mut rows = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for c in &cells {
        if !seen.insert((c.issues, c.theta)) {
            continue;
        }
        let region = phase_region(c.issues, c.theta).map_err(CliError::model)?;
        let (frac, decimal) =
            exact_pair(&expected_weight_uniform::<Rational>(c.issues, c.theta).map_err(CliError::model)?);
        rows.push(format!("{},{},{},{},{}", c.issues, c.theta, region, frac, decimal));
    }
    dest.write_main("phase.csv", |w| {
        prov.write_csv_header(w)?;
        writeln!(w, "F,theta,phase_region,expected_weight,expected_weight_decimal")?;
        for r in &rows {
            writeln!(w, "{r}")?;
        }
        Ok(())
    })
}
