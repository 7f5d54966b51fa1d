//! Replicated Monte Carlo measurements and initial-measure statistics.
//!
//! Replicate `k` of a run with master seed `m` always uses `replicate_seed(m, k)`,
//! and results are collected in replicate order, so the output does not depend
//! on how rayon schedules the work.

use rand::Rng;
use rayon::prelude::*;
use vdeffuant::engine::{run, ArrowEvent, Engine, LatticeState, Observer, RunOutcome, StopCondition};
use vdeffuant::ledger::EdgeAccount;
use vdeffuant::opinion::{pile_pmf_biased, pile_pmf_uniform, pole_probability, SiteSampler};
use vdeffuant::particles::densities;
use vdeffuant::rng::{replicate_seed, stream_rng, Stream};
use vdeffuant::{
    ActiveArrowLog, Boundary, ContributionLedger, EdgeClass, FinalClass, InitSpec, LatticeSpec, ModelError,
    OpinionProfile, ParticleView, Rational, Scalar,
};

use crate::config::ExperimentConfig;

/// Runs `f` for replicates `0..n` in parallel and returns results in order.
pub fn replicate_map<T, F>(n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Engine of one replicate, without the per-event recomputation check.
pub fn engine_for(cfg: &ExperimentConfig, seed: u64) -> Result<Engine, ModelError> {
    Ok(Engine::from_seed(cfg.params, cfg.lattice, &cfg.init, seed, cfg.mode)?.with_audit(false))
}

/// Event counts accumulated over several calls to [`run`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Totals {
    pub events: u64,
    pub active_events: u64,
    pub annihilations: u64,
    pub truncated: bool,
    pub last_outcome: Option<RunOutcome>,
}

impl Totals {
    fn add(&mut self, s: &vdeffuant::RunSummary) {
        self.events += s.events;
        self.active_events += s.active_events;
        self.annihilations += s.annihilations;
        self.truncated |= s.outcome == RunOutcome::Truncated;
        self.last_outcome = Some(s.outcome);
    }
}

/// Advances to time `t`, stopping early once nothing can move or the budget is spent.
pub fn advance<O: Observer + ?Sized>(
    engine: &mut Engine,
    t: f64,
    cfg: &ExperimentConfig,
    totals: &mut Totals,
    observer: &mut O,
) {
    if totals.truncated {
        return;
    }
    let stop = StopCondition {
        t_max: Some(t),
        max_events: cfg.max_events.map(|m| m.saturating_sub(totals.events)),
        until_absorbed: true,
        event_budget: cfg.event_budget.saturating_sub(totals.events),
    };
    let s = run(engine, &stop, observer);
    totals.add(&s);
}

/// Class of the final configuration, `Truncated` also when the event budget ran out.
pub fn final_class(engine: &Engine, totals: &Totals) -> FinalClass {
    if totals.truncated {
        FinalClass::Truncated
    } else {
        vdeffuant::engine::final_class(engine.view())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesPoint {
    pub time: f64,
    pub active_density: f64,
    pub frozen_density: f64,
    pub blockade_count: usize,
    /// Fraction of edges whose endpoints agree on every issue.
    pub consensus_pairs_fraction: f64,
}

impl SeriesPoint {
    pub fn of(time: f64, view: &ParticleView) -> Self {
        let d = densities(view);
        let edges = view.edges().max(1);
        let empty = (0..view.edges()).filter(|&e| view.zeta(e) == 0).count();
        Self {
            time,
            active_density: d.active_per_edge,
            frozen_density: d.frozen_per_edge,
            blockade_count: view.blockades(),
            consensus_pairs_fraction: empty as f64 / edges as f64,
        }
    }

    /// Particles of every kind per edge.
    pub fn particle_density(&self) -> f64 {
        self.active_density + self.frozen_density
    }
}

/// Samples the particle densities at every time of `grid` (which must be increasing).
pub fn density_series<O: Observer + ?Sized>(
    engine: &mut Engine,
    grid: &[f64],
    cfg: &ExperimentConfig,
    totals: &mut Totals,
    observer: &mut O,
) -> Vec<SeriesPoint> {
    grid.iter()
        .map(|&t| {
            advance(engine, t, cfg, totals, observer);
            SeriesPoint::of(t, engine.view())
        })
        .collect()
}

/// Marks every edge an active arrow crosses or lands on.
#[derive(Clone, Debug)]
pub struct UntouchedEdges {
    touched: Vec<bool>,
}

impl UntouchedEdges {
    pub fn new(edges: usize) -> Self {
        Self { touched: vec![false; edges] }
    }

    pub fn touched(&self, edge: usize) -> bool {
        self.touched[edge]
    }
}

impl Observer for UntouchedEdges {
    fn observe(&mut self, event: &ArrowEvent, _: &LatticeState, _: &ParticleView) {
        if event.active {
            if let Some(e) = event.edge {
                self.touched[e] = true;
            }
            if let Some(e) = event.landing {
                self.touched[e] = true;
            }
        }
    }
}

/// Fraction of the time-0 blockades never touched by an active arrow; `None` without any.
pub fn blockade_survival(initial: &[bool], untouched: &UntouchedEdges) -> Option<f64> {
    let total = initial.iter().filter(|&&b| b).count();
    if total == 0 {
        return None;
    }
    let alive = initial.iter().enumerate().filter(|&(e, &b)| b && !untouched.touched(e)).count();
    Some(alive as f64 / total as f64)
}

pub fn initial_blockades(view: &ParticleView) -> Vec<bool> {
    (0..view.edges()).map(|e| view.class(e) == EdgeClass::Blockade).collect()
}

/// One replicate of the persistence measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct Persistence {
    pub seed: u64,
    /// `None` when the start had no blockade.
    pub blockade_survival: Option<f64>,
    /// Maximal ancestor displacement of site 0 at each requested time.
    pub displacement: Vec<usize>,
    pub particle_density: f64,
    pub truncated: bool,
}

/// Blockade survival at the last time of `times` and ancestor reach of site 0 at each time.
pub fn persistence(cfg: &ExperimentConfig, seed: u64, times: &[f64]) -> Result<Persistence, ModelError> {
    let mut engine = engine_for(cfg, seed)?;
    let initial = initial_blockades(engine.view());
    let mut observers =
        (UntouchedEdges::new(cfg.lattice.edges()), ActiveArrowLog::new(cfg.lattice, cfg.params.issues()));
    let mut totals = Totals::default();
    for &t in times {
        advance(&mut engine, t, cfg, &mut totals, &mut observers);
    }
    let (untouched, log) = observers;
    let displacement = times.iter().map(|&t| log.reach_stats(0, t).max_abs_displacement).collect();
    let view = engine.view();
    Ok(Persistence {
        seed,
        blockade_survival: blockade_survival(&initial, &untouched),
        displacement,
        particle_density: view.total_particles() as f64 / view.edges().max(1) as f64,
        truncated: totals.truncated,
    })
}

/// Outcome of the first active jump onto each time-0 blockade, by initial pile size.
#[derive(Clone, Debug)]
pub struct FirstArrivals {
    initial: Vec<u32>,
    seen: Vec<bool>,
    limit: u32,
    /// `(arrivals, annihilations)` indexed by initial pile size.
    pub by_size: Vec<(u64, u64)>,
}

impl FirstArrivals {
    pub fn new(view: &ParticleView) -> Self {
        Self {
            initial: (0..view.edges()).map(|e| view.zeta(e)).collect(),
            seen: vec![false; view.edges()],
            limit: view.mobile_limit(),
            by_size: vec![(0, 0); view.issues() as usize + 1],
        }
    }
}

impl Observer for FirstArrivals {
    fn observe(&mut self, event: &ArrowEvent, _: &LatticeState, _: &ParticleView) {
        let Some(e) = event.landing.filter(|_| event.active) else { return };
        let j = self.initial[e];
        if j > self.limit && !self.seen[e] {
            self.seen[e] = true;
            let slot = &mut self.by_size[j as usize];
            slot.0 += 1;
            slot.1 += u64::from(event.annihilated);
        }
    }
}

/// Ledger of one replicate run to `cfg.t_max` (or absorption).
#[derive(Clone, Debug)]
pub struct ContributionRun {
    /// Accounts closed by the end of the run.
    pub closed: Vec<EdgeAccount>,
    pub first_arrivals: FirstArrivals,
}

pub fn contribution_run(cfg: &ExperimentConfig, seed: u64) -> Result<ContributionRun, ModelError> {
    let mut engine = engine_for(cfg, seed)?;
    let mut observers = (ContributionLedger::new(engine.view()), FirstArrivals::new(engine.view()));
    let mut totals = Totals::default();
    advance(&mut engine, cfg.t_max, cfg, &mut totals, &mut observers);
    let (ledger, first_arrivals) = observers;
    let accounts = ledger.finalize().expect("engine events arrive in time order");
    Ok(ContributionRun { closed: accounts.into_iter().filter(EdgeAccount::is_closed).collect(), first_arrivals })
}

/// Fraction of pairs `(x, x + d)` that agree on every issue.
pub fn agreement_fraction(lattice: &LatticeSpec, opinions: &[OpinionProfile], d: usize) -> Option<f64> {
    let l = lattice.sites();
    let pairs: Box<dyn Iterator<Item = (usize, usize)>> = match lattice.boundary() {
        Boundary::Periodic => Box::new((0..l).map(move |x| (x, (x + d) % l))),
        Boundary::FreeInterval => Box::new((0..l.saturating_sub(d)).map(move |x| (x, x + d))),
    };
    let (mut n, mut same) = (0usize, 0usize);
    for (a, b) in pairs {
        n += 1;
        same += usize::from(opinions[a] == opinions[b]);
    }
    (n > 0).then(|| same as f64 / n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterRow {
    pub distance: usize,
    pub time: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub replicates: u64,
}

/// `P(eta_t(x) = eta_t(x + d))` averaged over sites, then over replicates.
pub fn cluster_probability(
    cfg: &ExperimentConfig,
    distances: &[usize],
    times: &[f64],
) -> Result<Vec<ClusterRow>, ModelError> {
    let mut order: Vec<f64> = times.to_vec();
    order.sort_by(f64::total_cmp);
    order.dedup();
    let per_rep: Vec<Result<Vec<Vec<Option<f64>>>, ModelError>> = replicate_map(cfg.replicates, |k| {
        let mut engine = engine_for(cfg, replicate_seed(cfg.seed, k))?;
        let mut totals = Totals::default();
        Ok(order
            .iter()
            .map(|&t| {
                advance(&mut engine, t, cfg, &mut totals, &mut ());
                distances.iter().map(|&d| agreement_fraction(&cfg.lattice, engine.state().opinions(), d)).collect()
            })
            .collect())
    });
    let per_rep: Vec<_> = per_rep.into_iter().collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for (ti, &t) in order.iter().enumerate() {
        for (di, &d) in distances.iter().enumerate() {
            let xs: Vec<f64> = per_rep.iter().filter_map(|r| r[ti][di]).collect();
            let (mean, se) = mean_and_se(&xs);
            rows.push(ClusterRow { distance: d, time: t, estimate: mean, std_error: se, replicates: xs.len() as u64 });
        }
    }
    Ok(rows)
}

/// Sample mean and its standard error; `nan` where undefined.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One sweep cell's Monte Carlo part.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellStats {
    /// Mean over replicates with at least one initial blockade; `nan` if none had one.
    pub blockade_survival: f64,
    pub final_particle_density: f64,
    pub truncated: u64,
}

pub fn sweep_cell(cfg: &ExperimentConfig) -> Result<CellStats, ModelError> {
    let reps = replicate_map(cfg.replicates, |k| persistence(cfg, replicate_seed(cfg.seed, k), &[cfg.t_max]));
    let reps: Vec<Persistence> = reps.into_iter().collect::<Result<_, _>>()?;
    let survival: Vec<f64> = reps.iter().filter_map(|p| p.blockade_survival).collect();
    let density: Vec<f64> = reps.iter().map(|p| p.particle_density).collect();
    Ok(CellStats {
        blockade_survival: mean_and_se(&survival).0,
        final_particle_density: mean_and_se(&density).0,
        truncated: reps.iter().filter(|p| p.truncated).count() as u64,
    })
}

/// Observed count against its mean and standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct CountCheck {
    pub statistic: &'static str,
    pub key: String,
    pub count: u64,
    pub expected: f64,
    pub std_dev: f64,
}

impl CountCheck {
    pub fn z_score(&self) -> f64 {
        let diff = self.count as f64 - self.expected;
        if self.std_dev > 0.0 {
            diff / self.std_dev
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(diff)
        }
    }
}

/// Draws `samples + 1` sites in a row from the initial measure.
pub fn sample_row(init: &InitSpec, issues: u32, samples: u64, seed: u64) -> Result<Vec<OpinionProfile>, ModelError> {
    let sampler = SiteSampler::new(init, issues)?;
    let mut rng = stream_rng(seed, Stream::Init);
    Ok((0..=samples).map(|_| sampler.sample(&mut rng)).collect())
}

/// Pile-size histogram of the `samples` edges against the exact marginal law.
pub fn pile_histogram(init: &InitSpec, row: &[OpinionProfile], issues: u32) -> Result<Vec<CountCheck>, ModelError> {
    let n = row.len().saturating_sub(1) as u64;
    let mut counts = vec![0u64; issues as usize + 1];
    for w in row.windows(2) {
        counts[vdeffuant::hamming(w[0], w[1]) as usize] += 1;
    }
    (0..=issues)
        .map(|j| {
            let p = match init {
                InitSpec::Uniform => pile_pmf_uniform::<f64>(issues, j)?,
                InitSpec::Biased { rho } => pile_pmf_biased::<Rational>(issues, rho, j)?.to_f64(),
            };
            let nf = n as f64;
            Ok(CountCheck {
                statistic: "pile",
                key: j.to_string(),
                count: counts[j as usize],
                expected: nf * p,
                std_dev: (nf * p * (1.0 - p)).sqrt(),
            })
        })
        .collect()
}

/// Exact probability that a site holds `u`.
fn site_probability(init: &InitSpec, issues: u32, u: OpinionProfile) -> Result<f64, ModelError> {
    Ok(init.site_probability(issues, u)?.to_f64())
}

/// Probability that bit `level` of a site is set.
pub fn bit_probability(init: &InitSpec, issues: u32) -> Result<f64, ModelError> {
    init.validate(issues)?;
    Ok(match init {
        InitSpec::Uniform => 0.5,
        InitSpec::Biased { rho } => {
            // the all-ones profile plus the 2^{F-1} - 1 other profiles with the bit set
            let others = Rational::from_u128((1u128 << (issues - 1)) - 1);
            (pole_probability(issues, rho) + others * rho.clone()).to_f64()
        }
    })
}

/// Changeovers of issue `level` along the row; mean `2Np(1-p)`.
pub fn changeovers(row: &[OpinionProfile], level: u32, p: f64) -> CountCheck {
    let n = row.len().saturating_sub(1) as u64;
    let count = row.windows(2).filter(|w| w[0].bit(level) != w[1].bit(level)).count() as u64;
    let z = 2.0 * p * (1.0 - p);
    let nf = n as f64;
    // neighbouring indicators share a site
    let var = nf * z * (1.0 - z) + 2.0 * (nf - 1.0).max(0.0) * (p * (1.0 - p) - z * z);
    CountCheck {
        statistic: "changeovers",
        key: level.to_string(),
        count,
        expected: nf * z,
        std_dev: var.max(0.0).sqrt(),
    }
}

/// Edges whose left site holds `u` and right site holds `v`; mean `N rho(u) rho(v)`.
pub fn edge_pairs(
    init: &InitSpec,
    row: &[OpinionProfile],
    issues: u32,
    u: OpinionProfile,
    v: OpinionProfile,
) -> Result<CountCheck, ModelError> {
    let n = row.len().saturating_sub(1) as u64;
    let count = row.windows(2).filter(|w| w[0] == u && w[1] == v).count() as u64;
    let (pu, pv) = (site_probability(init, issues, u)?, site_probability(init, issues, v)?);
    let q = pu * pv;
    let nf = n as f64;
    let overlap = if u == v { pu * pu * pu } else { 0.0 };
    let var = nf * q * (1.0 - q) + 2.0 * (nf - 1.0).max(0.0) * (overlap - q * q);
    Ok(CountCheck {
        statistic: "edge_pairs",
        key: format!("{:x}->{:x}", u.bits(), v.bits()),
        count,
        expected: nf * q,
        std_dev: var.max(0.0).sqrt(),
    })
}

/// Every diagnostic of the `stats` command.
pub fn initial_statistics(
    init: &InitSpec,
    issues: u32,
    samples: u64,
    seed: u64,
) -> Result<Vec<CountCheck>, ModelError> {
    let row = sample_row(init, issues, samples, seed)?;
    let mut out = pile_histogram(init, &row, issues)?;
    let p = bit_probability(init, issues)?;
    out.extend((0..issues).map(|i| changeovers(&row, i, p)));
    let minus = OpinionProfile::all_against();
    let plus = OpinionProfile::all_in_favour(issues);
    let single = OpinionProfile::new(1, issues)?;
    let mut pairs = vec![(minus, plus), (plus, minus), (minus, minus)];
    if single != plus {
        pairs.push((minus, single));
    }
    for (u, v) in pairs {
        out.push(edge_pairs(init, &row, issues, u, v)?);
    }
    Ok(out)
}

/// Uniformly placed genealogy probes at time `t`.
pub fn random_probes(log: &ActiveArrowLog, count: usize, t: f64, seed: u64) -> Vec<vdeffuant::genealogy::Probe> {
    let mut rng = stream_rng(seed, Stream::Probes);
    let sites = log.lattice().sites();
    (0..count)
        .map(|_| {
            let x = rng.random_range(0..sites);
            let i = rng.random_range(0..log.issues());
            vdeffuant::genealogy::probe(log, x, t, i)
        })
        .collect()
}
