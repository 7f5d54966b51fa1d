//! Event-driven Harris construction.
//!
//! Every `(site, level)` pair carries a unit-rate Poisson clock. When it rings an
//! arrow `x -> x + B` is drawn with a fair direction `B` and a uniform mark `U`;
//! the arrow is active iff the crossed edge is occupied at that level and
//! `U <= r(zeta)`. An active arrow copies bit `i` of `x` into `x + B`, which in
//! the particle picture moves the particle one edge further in direction `B`,
//! annihilating it if that edge-level was already occupied.
//!
//! The aggregate of `L * F` clocks is sampled Gillespie style: one exponential
//! waiting time of rate `L * F`, then a uniform `(site, level)`.
//!
//! [`EventMode::RejectionFree`] skips the inactive arrows: it only draws the
//! arrows that turn out active, at their exact total rate `sum_e zeta(e) r(zeta(e))`.
//! Opinion trajectories have the same law; the inactive arrows are simply not
//! materialised.

use std::io::{self, Read, Write};

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::ModelError;
use crate::opinion::{Direction, Dynamics, InitSpec, LatticeSpec, ModelParams, OpinionProfile, SiteSampler};
use crate::particles::{derive, ParticleView};
use crate::rng::{stream_rng, Stream};
use crate::scalar::Scalar;

/// Individual jump rate of a particle in a pile of `j`.
///
/// Deffuant: `1/j` for `0 < j <= theta`, otherwise 0. Axelrod: `(1/j)(1 - j/F)`.
/// Both vanish at `j = 0`.
pub fn rate<T: Scalar>(params: &ModelParams, j: u32) -> T {
    if j == 0 || j > params.issues() {
        return T::zero();
    }
    match params.dynamics() {
        Dynamics::Deffuant => {
            if j <= params.theta() {
                T::ratio(1, i64::from(j))
            } else {
                T::zero()
            }
        }
        Dynamics::Axelrod => {
            let f = i64::from(params.issues());
            let j = i64::from(j);
            T::ratio(1, j) * (T::one() - T::ratio(j, f))
        }
    }
}

/// Opinions on a finite lattice plus the simulation clock.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeState {
    params: ModelParams,
    lattice: LatticeSpec,
    opinions: Vec<OpinionProfile>,
    clock: f64,
    event_count: u64,
}

impl LatticeState {
    pub fn new(params: ModelParams, lattice: LatticeSpec, opinions: Vec<OpinionProfile>) -> Result<Self, ModelError> {
        if opinions.len() != lattice.sites() {
            return Err(ModelError::ConfigurationLength { expected: lattice.sites(), got: opinions.len() });
        }
        let mask = params.mask();
        if let Some(bad) = opinions.iter().find(|u| u.bits() & !mask != 0) {
            return Err(ModelError::ProfileOutOfRange { issues: params.issues(), bits: bad.bits() });
        }
        Ok(Self { params, lattice, opinions, clock: 0.0, event_count: 0 })
    }

    /// Independent draws from `init` at every site.
    pub fn sample<R: RngCore + ?Sized>(
        params: ModelParams,
        lattice: LatticeSpec,
        init: &InitSpec,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let sampler = SiteSampler::new(init, params.issues())?;
        let opinions = (0..lattice.sites()).map(|_| sampler.sample(rng)).collect();
        Self::new(params, lattice, opinions)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn opinions(&self) -> &[OpinionProfile] {
        &self.opinions
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn event_count(&self) -> u64 {
        self.event_count
    }
}

/// One arrow of the graphical construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArrowEvent {
    pub index: u64,
    pub time: f64,
    pub site: usize,
    pub level: u32,
    pub direction: Direction,
    pub mark: f64,
    /// Edge crossed by the arrow; `None` when it points off an interval.
    pub edge: Option<usize>,
    /// `xi(edge, level)` just before the event.
    pub occupied: bool,
    /// `zeta(edge)` just before the event.
    pub pile: u32,
    pub active: bool,
    /// Edge the moving particle lands on (active arrows only; `None` if it left the interval).
    pub landing: Option<usize>,
    /// The jump removed two particles.
    pub annihilated: bool,
}

impl ArrowEvent {
    /// Site whose opinion is overwritten.
    pub fn target(&self, lattice: &LatticeSpec) -> Option<usize> {
        lattice.neighbour(self.site, self.direction)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum EventMode {
    /// Every clock ring is drawn; inactive arrows are no-ops.
    #[default]
    Faithful,
    /// Only active arrows are drawn.
    RejectionFree,
}

/// Called synchronously after every event.
pub trait Observer {
    fn observe(&mut self, event: &ArrowEvent, state: &LatticeState, view: &ParticleView);
}

impl<O: Observer + ?Sized> Observer for &mut O {
    fn observe(&mut self, event: &ArrowEvent, state: &LatticeState, view: &ParticleView) {
        (**self).observe(event, state, view)
    }
}

impl Observer for () {
    fn observe(&mut self, _: &ArrowEvent, _: &LatticeState, _: &ParticleView) {}
}

impl<A: Observer, B: Observer> Observer for (A, B) {
    fn observe(&mut self, event: &ArrowEvent, state: &LatticeState, view: &ParticleView) {
        self.0.observe(event, state, view);
        self.1.observe(event, state, view);
    }
}

impl Observer for [&mut dyn Observer] {
    fn observe(&mut self, event: &ArrowEvent, state: &LatticeState, view: &ParticleView) {
        for o in self.iter_mut() {
            o.observe(event, state, view);
        }
    }
}

const NO_SLOT: u32 = u32::MAX;

/// Mobile edges bucketed by pile size, for O(1) rejection-free selection.
#[derive(Clone, Debug)]
struct MobileIndex {
    /// `buckets[j - 1]` lists edges with pile size `j`.
    buckets: Vec<Vec<u32>>,
    /// Position of each edge inside its bucket.
    slot: Vec<u32>,
    /// Total activity `j * r(j)` of one edge in bucket `j`.
    weight: Vec<f64>,
}

impl MobileIndex {
    fn new(view: &ParticleView, rates: &[f64]) -> Self {
        let limit = view.mobile_limit() as usize;
        let mut index = Self {
            buckets: vec![Vec::new(); limit],
            slot: vec![NO_SLOT; view.edges()],
            weight: (1..=limit).map(|j| j as f64 * rates[j]).collect(),
        };
        for e in 0..view.edges() {
            index.insert(e, view.zeta(e));
        }
        index
    }

    fn insert(&mut self, edge: usize, zeta: u32) {
        let j = zeta as usize;
        if j == 0 || j > self.buckets.len() || self.weight[j - 1] <= 0.0 {
            return;
        }
        let bucket = &mut self.buckets[j - 1];
        self.slot[edge] = bucket.len() as u32;
        bucket.push(edge as u32);
    }

    fn remove(&mut self, edge: usize, zeta: u32) {
        let pos = self.slot[edge];
        if pos == NO_SLOT {
            return;
        }
        let bucket = &mut self.buckets[zeta as usize - 1];
        let last = *bucket.last().expect("slot points into an empty bucket");
        bucket.swap_remove(pos as usize);
        if last as usize != edge {
            self.slot[last as usize] = pos;
        }
        self.slot[edge] = NO_SLOT;
    }

    fn total(&self) -> f64 {
        self.buckets.iter().zip(&self.weight).map(|(b, w)| b.len() as f64 * w).sum()
    }

    /// Picks an edge with probability proportional to its activity; returns `(edge, zeta)`.
    fn pick<R: Rng>(&self, rng: &mut R, total: f64) -> (usize, u32) {
        let mut u = rng.random::<f64>() * total;
        let mut fallback = None;
        for (j, (bucket, &w)) in self.buckets.iter().zip(&self.weight).enumerate() {
            if bucket.is_empty() {
                continue;
            }
            let mass = bucket.len() as f64 * w;
            if u < mass {
                let k = ((u / w) as usize).min(bucket.len() - 1);
                return (bucket[k] as usize, j as u32 + 1);
            }
            u -= mass;
            fallback = Some((bucket[bucket.len() - 1] as usize, j as u32 + 1));
        }
        // rounding pushed u past the last bucket
        fallback.expect("pick called with no mobile edge")
    }
}

/// A coupled (opinions, particles) pair driven by its own dynamics stream.
#[derive(Clone, Debug)]
pub struct Engine {
    state: LatticeState,
    view: ParticleView,
    rng: ChaCha8Rng,
    mode: EventMode,
    rates: Vec<f64>,
    mobile: Option<MobileIndex>,
    pending: Option<f64>,
    audit: bool,
}

impl Engine {
    pub fn new(state: LatticeState, rng: ChaCha8Rng, mode: EventMode) -> Self {
        let view = derive(&state);
        let rates: Vec<f64> = (0..=state.params.issues()).map(|j| rate::<f64>(&state.params, j)).collect();
        let mobile = match mode {
            EventMode::Faithful => None,
            EventMode::RejectionFree => Some(MobileIndex::new(&view, &rates)),
        };
        Self { state, view, rng, mode, rates, mobile, pending: None, audit: cfg!(debug_assertions) }
    }

    /// Samples the initial configuration from the `Init` stream of `seed` and
    /// drives the dynamics from its `Dynamics` stream.
    pub fn from_seed(
        params: ModelParams,
        lattice: LatticeSpec,
        init: &InitSpec,
        seed: u64,
        mode: EventMode,
    ) -> Result<Self, ModelError> {
        let mut init_rng = stream_rng(seed, Stream::Init);
        let state = LatticeState::sample(params, lattice, init, &mut init_rng)?;
        Ok(Self::new(state, stream_rng(seed, Stream::Dynamics), mode))
    }

    /// Turns on the per-event coupling check (always on in debug builds).
    pub fn with_audit(mut self, audit: bool) -> Self {
        self.audit = audit;
        self
    }

    pub fn state(&self) -> &LatticeState {
        &self.state
    }

    pub fn view(&self) -> &ParticleView {
        &self.view
    }

    pub fn mode(&self) -> EventMode {
        self.mode
    }

    pub fn clock(&self) -> f64 {
        self.state.clock
    }

    /// Time of the next event without performing it; `INFINITY` if none can occur.
    pub fn peek_time(&mut self) -> f64 {
        if let Some(t) = self.pending {
            return t;
        }
        let total = match &self.mobile {
            None => (self.state.lattice.sites() as f64) * f64::from(self.state.params.issues()),
            Some(index) => index.total(),
        };
        let t = if total > 0.0 {
            let wait: f64 = self.rng.sample::<f64, _>(Exp1) / total;
            let next = self.state.clock + wait;
            // keep event times strictly increasing under rounding
            if next > self.state.clock {
                next
            } else {
                self.state.clock.next_up()
            }
        } else {
            f64::INFINITY
        };
        self.pending = Some(t);
        t
    }

    /// Performs the next event. `None` only in rejection-free mode once nothing can move.
    pub fn step(&mut self) -> Option<ArrowEvent> {
        self.step_observed(&mut ())
    }

    pub fn step_observed<O: Observer + ?Sized>(&mut self, observer: &mut O) -> Option<ArrowEvent> {
        let time = self.peek_time();
        if !time.is_finite() {
            return None;
        }
        self.pending = None;
        self.state.clock = time;
        let event = match self.mode {
            EventMode::Faithful => self.faithful_event(time),
            EventMode::RejectionFree => self.rejection_free_event(time),
        };
        self.state.event_count += 1;
        observer.observe(&event, &self.state, &self.view);
        Some(event)
    }

    fn faithful_event(&mut self, time: f64) -> ArrowEvent {
        let issues = self.state.params.issues() as usize;
        let slot = self.rng.random_range(0..self.state.lattice.sites() * issues);
        let site = slot / issues;
        let level = (slot % issues) as u32;
        let direction = if self.rng.random::<bool>() { Direction::Right } else { Direction::Left };
        let mark: f64 = self.rng.random();
        let edge = self.state.lattice.edge_towards(site, direction);
        let mut event = ArrowEvent {
            index: self.state.event_count,
            time,
            site,
            level,
            direction,
            mark,
            edge,
            occupied: false,
            pile: 0,
            active: false,
            landing: None,
            annihilated: false,
        };
        if let Some(e) = edge {
            event.occupied = self.view.occupied(e, level);
            event.pile = self.view.zeta(e);
            event.active = event.occupied && mark <= self.rates[event.pile as usize];
            if event.active {
                let (landing, annihilated) = self.jump(site, direction, e, level);
                event.landing = landing;
                event.annihilated = annihilated;
            }
        }
        event
    }

    fn rejection_free_event(&mut self, time: f64) -> ArrowEvent {
        let index = self.mobile.as_ref().expect("rejection-free engine without index");
        let total = index.total();
        let (edge, pile) = index.pick(&mut self.rng, total);
        let k = self.rng.random_range(0..pile);
        let level = nth_set_bit(self.view.xi(edge), k);
        let direction = if self.rng.random::<bool>() { Direction::Right } else { Direction::Left };
        // conditioned on activity the mark is uniform on [0, r(zeta))
        let mark = self.rng.random::<f64>() * self.rates[pile as usize];
        let (left, right) = self.state.lattice.endpoints(edge);
        let site = match direction {
            Direction::Right => left,
            Direction::Left => right,
        };
        let (landing, annihilated) = self.jump(site, direction, edge, level);
        ArrowEvent {
            index: self.state.event_count,
            time,
            site,
            level,
            direction,
            mark,
            edge: Some(edge),
            occupied: true,
            pile,
            active: true,
            landing,
            annihilated,
        }
    }

    /// Applies an active arrow `site -> site + direction` at `level` across `edge`.
    fn jump(&mut self, site: usize, direction: Direction, edge: usize, level: u32) -> (Option<usize>, bool) {
        let lattice = self.state.lattice;
        let target = lattice.neighbour(site, direction).expect("active arrow leaves the lattice");
        self.state.opinions[target].flip(level);
        let still = self.toggle(edge, level);
        debug_assert!(!still, "active arrow crossed an empty edge-level");
        let landing = lattice.edge_towards(target, direction);
        let annihilated = match landing {
            Some(next) => !self.toggle(next, level),
            None => false,
        };
        if self.audit {
            self.audit_edge(edge);
            if let Some(next) = landing {
                self.audit_edge(next);
            }
        }
        (landing, annihilated)
    }

    fn toggle(&mut self, edge: usize, level: u32) -> bool {
        let before = self.view.zeta(edge);
        let now = self.view.toggle(edge, level);
        if let Some(index) = self.mobile.as_mut() {
            index.remove(edge, before);
            index.insert(edge, self.view.zeta(edge));
        }
        now
    }

    fn audit_edge(&self, edge: usize) {
        let (a, b) = self.state.lattice.endpoints(edge);
        let expected = self.state.opinions[a].bits() ^ self.state.opinions[b].bits();
        assert_eq!(
            self.view.xi(edge),
            expected,
            "coupling broken at edge {edge} after event {}",
            self.state.event_count
        );
    }

    /// Full recomputation check of the incrementally maintained view.
    pub fn coupling_holds(&self) -> bool {
        derive(&self.state) == self.view
    }

    /// Runs every event with time `<= t`, then sets the clock to `t`.
    pub fn advance_to<O: Observer + ?Sized>(&mut self, t: f64, observer: &mut O) {
        while self.peek_time() <= t {
            self.step_observed(observer);
        }
        if t > self.state.clock {
            self.state.clock = t;
        }
    }
}

fn nth_set_bit(mut word: u64, n: u32) -> u32 {
    for _ in 0..n {
        word &= word - 1;
    }
    word.trailing_zeros()
}

/// When [`run`] stops.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopCondition {
    pub t_max: Option<f64>,
    pub max_events: Option<u64>,
    /// Stop as soon as no particle can move (consensus or fixated-frozen).
    pub until_absorbed: bool,
    /// Hard cap on events; exceeding it yields [`RunOutcome::Truncated`].
    pub event_budget: u64,
}

impl StopCondition {
    pub const DEFAULT_BUDGET: u64 = 50_000_000_000;

    pub fn at_time(t_max: f64) -> Self {
        Self { t_max: Some(t_max), max_events: None, until_absorbed: true, event_budget: Self::DEFAULT_BUDGET }
    }

    pub fn after_events(n: u64) -> Self {
        Self { t_max: None, max_events: Some(n), until_absorbed: false, event_budget: Self::DEFAULT_BUDGET }
    }

    pub fn absorption(event_budget: u64) -> Self {
        Self { t_max: None, max_events: None, until_absorbed: true, event_budget }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RunOutcome {
    /// All sites agree.
    Consensus,
    /// Particles remain but every pile is frozen.
    FixatedFrozen,
    TimeLimit,
    EventLimit,
    /// Hit the hard event budget.
    Truncated,
}

/// Classification of a final configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FinalClass {
    Consensus,
    FixatedFrozen,
    Truncated,
}

impl std::fmt::Display for FinalClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FinalClass::Consensus => "Consensus",
            FinalClass::FixatedFrozen => "FixatedFrozen",
            FinalClass::Truncated => "Truncated",
        };
        f.write_str(s)
    }
}

pub fn final_class(view: &ParticleView) -> FinalClass {
    if view.total_particles() == 0 {
        FinalClass::Consensus
    } else if view.is_absorbed() {
        FinalClass::FixatedFrozen
    } else {
        FinalClass::Truncated
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSummary {
    pub final_clock: f64,
    pub events: u64,
    pub active_events: u64,
    pub annihilations: u64,
    pub outcome: RunOutcome,
    pub final_class: FinalClass,
}

struct Counter<'a, O: ?Sized> {
    inner: &'a mut O,
    active: u64,
    annihilations: u64,
}

impl<O: Observer + ?Sized> Observer for Counter<'_, O> {
    fn observe(&mut self, event: &ArrowEvent, state: &LatticeState, view: &ParticleView) {
        self.active += u64::from(event.active);
        self.annihilations += u64::from(event.annihilated);
        self.inner.observe(event, state, view);
    }
}

/// Steps `engine` until `stop` fires.
pub fn run<O: Observer + ?Sized>(engine: &mut Engine, stop: &StopCondition, observer: &mut O) -> RunSummary {
    let mut counter = Counter { inner: observer, active: 0, annihilations: 0 };
    let mut events = 0u64;
    let outcome = loop {
        if stop.until_absorbed && engine.view.is_absorbed() {
            break absorbed_outcome(&engine.view);
        }
        if stop.max_events.is_some_and(|m| events >= m) {
            break RunOutcome::EventLimit;
        }
        if events >= stop.event_budget {
            break RunOutcome::Truncated;
        }
        let next = engine.peek_time();
        if let Some(t_max) = stop.t_max {
            if next > t_max {
                if t_max > engine.state.clock {
                    engine.state.clock = t_max;
                }
                break RunOutcome::TimeLimit;
            }
        }
        if !next.is_finite() {
            break absorbed_outcome(&engine.view);
        }
        engine.step_observed(&mut counter);
        events += 1;
    };
    RunSummary {
        final_clock: engine.state.clock,
        events,
        active_events: counter.active,
        annihilations: counter.annihilations,
        outcome,
        final_class: final_class(&engine.view),
    }
}

fn absorbed_outcome(view: &ParticleView) -> RunOutcome {
    if view.total_particles() == 0 {
        RunOutcome::Consensus
    } else {
        RunOutcome::FixatedFrozen
    }
}

/// CSV event log: `event_index,time,site,level,direction,active,annihilated`.
pub struct CsvEventLog<W: Write> {
    out: W,
    error: Option<io::Error>,
}

impl<W: Write> CsvEventLog<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "event_index,time,site,level,direction,active,annihilated")?;
        Ok(Self { out, error: None })
    }

    pub fn finish(mut self) -> io::Result<W> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> Observer for CsvEventLog<W> {
    fn observe(&mut self, event: &ArrowEvent, _: &LatticeState, _: &ParticleView) {
        if self.error.is_some() {
            return;
        }
        let result = writeln!(
            self.out,
            "{},{:?},{},{},{},{},{}",
            event.index,
            event.time,
            event.site,
            event.level,
            event.direction.sign(),
            u8::from(event.active),
            u8::from(event.annihilated)
        );
        if let Err(e) = result {
            self.error = Some(e);
        }
    }
}

/// One fixed-width record of the binary event log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventRecord {
    pub index: u64,
    pub time: f64,
    pub site: u32,
    pub level: u8,
    pub direction: i8,
    pub active: bool,
    pub annihilated: bool,
}

impl EventRecord {
    pub const BYTES: usize = 24;

    pub fn from_event(event: &ArrowEvent) -> Self {
        Self {
            index: event.index,
            time: event.time,
            site: event.site as u32,
            level: event.level as u8,
            direction: event.direction.sign() as i8,
            active: event.active,
            annihilated: event.annihilated,
        }
    }

    pub fn to_bytes(&self) -> [u8; Self::BYTES] {
        let mut buf = [0u8; Self::BYTES];
        buf[0..8].copy_from_slice(&self.index.to_le_bytes());
        buf[8..16].copy_from_slice(&self.time.to_le_bytes());
        buf[16..20].copy_from_slice(&self.site.to_le_bytes());
        buf[20] = self.level;
        buf[21] = self.direction as u8;
        buf[22] = u8::from(self.active);
        buf[23] = u8::from(self.annihilated);
        buf
    }

    pub fn from_bytes(buf: &[u8; Self::BYTES]) -> Self {
        let word = |r: std::ops::Range<usize>| -> [u8; 8] { buf[r].try_into().unwrap() };
        Self {
            index: u64::from_le_bytes(word(0..8)),
            time: f64::from_le_bytes(word(8..16)),
            site: u32::from_le_bytes(buf[16..20].try_into().unwrap()),
            level: buf[20],
            direction: buf[21] as i8,
            active: buf[22] != 0,
            annihilated: buf[23] != 0,
        }
    }
}

/// Little-endian fixed-width event log, [`EventRecord::BYTES`] bytes per event.
pub struct BinaryEventLog<W: Write> {
    out: W,
    error: Option<io::Error>,
}

impl<W: Write> BinaryEventLog<W> {
    pub fn new(out: W) -> Self {
        Self { out, error: None }
    }

    pub fn finish(mut self) -> io::Result<W> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> Observer for BinaryEventLog<W> {
    fn observe(&mut self, event: &ArrowEvent, _: &LatticeState, _: &ParticleView) {
        if self.error.is_none() {
            if let Err(e) = self.out.write_all(&EventRecord::from_event(event).to_bytes()) {
                self.error = Some(e);
            }
        }
    }
}

pub fn read_binary_events<R: Read>(mut input: R) -> io::Result<Vec<EventRecord>> {
    let mut records = Vec::new();
    let mut buf = [0u8; EventRecord::BYTES];
    loop {
        match input.read_exact(&mut buf) {
            Ok(()) => records.push(EventRecord::from_bytes(&buf)),
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(records),
            Err(e) => return Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::particles::level_parity;
    use crate::Rational;
    use rand::SeedableRng;

    fn profiles(issues: u32, bits: &[u64]) -> Vec<OpinionProfile> {
        bits.iter().map(|&b| OpinionProfile::new(b, issues).unwrap()).collect()
    }

    fn engine(params: ModelParams, lattice: LatticeSpec, bits: &[u64], seed: u64, mode: EventMode) -> Engine {
        let state = LatticeState::new(params, lattice, profiles(params.issues(), bits)).unwrap();
        Engine::new(state, ChaCha8Rng::seed_from_u64(seed), mode).with_audit(true)
    }

    #[test]
    fn rate_examples() {
        let d = ModelParams::deffuant(3, 2).unwrap();
        assert_eq!(rate::<Rational>(&d, 2), Rational::ratio(1, 2));
        assert_eq!(rate::<Rational>(&d, 3), Rational::from_i64(0));
        assert_eq!(rate::<Rational>(&d, 0), Rational::from_i64(0));
        let a = ModelParams::axelrod(3, 2).unwrap();
        assert_eq!(rate::<Rational>(&a, 3), Rational::from_i64(0));
        assert_eq!(rate::<Rational>(&a, 1), Rational::ratio(2, 3));
        assert!((rate::<f64>(&a, 2) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn blockade_arrows_are_inactive() {
        // F = 3, theta = 2: alternating u_- / u_+ makes every edge a 3-blockade
        let params = ModelParams::deffuant(3, 2).unwrap();
        let lattice = LatticeSpec::ring(6).unwrap();
        let mut eng = engine(params, lattice, &[0, 7, 0, 7, 0, 7], 1, EventMode::Faithful);
        let before = eng.state().clone();
        for _ in 0..10_000 {
            let ev = eng.step().unwrap();
            assert!(!ev.active);
        }
        assert_eq!(eng.state().opinions(), before.opinions());
    }

    #[test]
    fn single_disagreement_resolves() {
        // sites 0 and 1 differ on issue 1 only; force the arrow by scanning events
        let params = ModelParams::deffuant(3, 1).unwrap();
        let lattice = LatticeSpec::interval(3).unwrap();
        let mut eng = engine(params, lattice, &[0b000, 0b010, 0b010], 9, EventMode::Faithful);
        loop {
            let ev = eng.step().unwrap();
            if ev.active {
                assert_eq!(ev.edge, Some(0));
                assert_eq!(ev.level, 1);
                break;
            }
        }
        let ops = eng.state().opinions();
        assert_eq!(crate::opinion::hamming(ops[0], ops[1]), 0);
    }

    #[test]
    fn absorbed_configurations_stop_immediately() {
        let params = ModelParams::deffuant(4, 2).unwrap();
        let lattice = LatticeSpec::ring(8).unwrap();
        let mut eng = engine(params, lattice, &[5; 8], 3, EventMode::Faithful);
        let summary = run(&mut eng, &StopCondition::absorption(1_000), &mut ());
        assert_eq!(summary.outcome, RunOutcome::Consensus);
        assert_eq!(summary.events, 0);
        assert_eq!(summary.final_clock, 0.0);

        // F = 2, theta = 1: piles of size 2 next to each other, nothing active
        let params = ModelParams::deffuant(2, 1).unwrap();
        let mut eng = engine(params, LatticeSpec::ring(4).unwrap(), &[0, 3, 0, 3], 3, EventMode::Faithful);
        let summary = run(&mut eng, &StopCondition::absorption(1_000), &mut ());
        assert_eq!(summary.outcome, RunOutcome::FixatedFrozen);
        assert_eq!(summary.events, 0);
    }

    #[test]
    fn voter_reduction_reaches_consensus() {
        let params = ModelParams::deffuant(1, 1).unwrap();
        let lattice = LatticeSpec::ring(16).unwrap();
        for seed in 0..5 {
            let mut eng = Engine::from_seed(params, lattice, &InitSpec::Uniform, seed, EventMode::Faithful).unwrap();
            let summary = run(&mut eng, &StopCondition::absorption(50_000_000), &mut ());
            assert_eq!(summary.outcome, RunOutcome::Consensus);
            assert_eq!(summary.final_class, FinalClass::Consensus);
        }
    }

    #[test]
    fn ring_invariants_hold_along_a_run() {
        let params = ModelParams::deffuant(4, 2).unwrap();
        let lattice = LatticeSpec::ring(32).unwrap();
        for mode in [EventMode::Faithful, EventMode::RejectionFree] {
            let mut eng = Engine::from_seed(params, lattice, &InitSpec::Uniform, 17, mode).unwrap().with_audit(true);
            let mut total = eng.view().total_particles();
            for _ in 0..20_000 {
                let Some(ev) = eng.step() else { break };
                let now = eng.view().total_particles();
                if ev.annihilated {
                    assert_eq!(total - now, 2);
                } else {
                    assert_eq!(total, now);
                }
                if ev.active {
                    assert!(ev.pile <= 2);
                }
                total = now;
                for level in 0..4 {
                    assert_eq!(level_parity(eng.view(), level), 0);
                }
            }
            assert!(eng.coupling_holds());
        }
    }

    #[test]
    fn interval_boundary_arrows_are_noops() {
        let params = ModelParams::deffuant(1, 1).unwrap();
        let lattice = LatticeSpec::interval(3).unwrap();
        let mut eng = engine(params, lattice, &[1, 0, 0], 2, EventMode::Faithful);
        for _ in 0..1000 {
            let ev = eng.step().unwrap();
            let off =
                (ev.site == 0 && ev.direction == Direction::Left) || (ev.site == 2 && ev.direction == Direction::Right);
            if off {
                assert_eq!(ev.edge, None);
                assert!(!ev.active);
            }
        }
    }

    #[test]
    fn clock_strictly_increases() {
        let params = ModelParams::deffuant(3, 1).unwrap();
        let lattice = LatticeSpec::ring(10).unwrap();
        let mut eng = Engine::from_seed(params, lattice, &InitSpec::Uniform, 4, EventMode::Faithful).unwrap();
        let mut last = eng.clock();
        for _ in 0..10_000 {
            let ev = eng.step().unwrap();
            assert!(ev.time > last);
            last = ev.time;
        }
    }

    #[test]
    fn advance_to_is_schedule_independent() {
        let params = ModelParams::deffuant(3, 2).unwrap();
        let lattice = LatticeSpec::ring(20).unwrap();
        let mut a = Engine::from_seed(params, lattice, &InitSpec::Uniform, 8, EventMode::Faithful).unwrap();
        let mut b = a.clone();
        a.advance_to(10.0, &mut ());
        for k in 1..=100 {
            b.advance_to(f64::from(k) * 0.1, &mut ());
        }
        assert_eq!(a.state().opinions(), b.state().opinions());
        assert_eq!(a.state().event_count(), b.state().event_count());
    }

    #[test]
    fn binary_log_round_trips() {
        let params = ModelParams::deffuant(3, 2).unwrap();
        let lattice = LatticeSpec::ring(12).unwrap();
        let mut eng = Engine::from_seed(params, lattice, &InitSpec::Uniform, 21, EventMode::Faithful).unwrap();
        let mut log = BinaryEventLog::new(Vec::new());
        let mut seen = Vec::new();
        for _ in 0..500 {
            seen.push(EventRecord::from_event(&eng.step_observed(&mut log).unwrap()));
        }
        let bytes = log.finish().unwrap();
        assert_eq!(read_binary_events(bytes.as_slice()).unwrap(), seen);
    }

    #[test]
    fn csv_log_has_expected_columns() {
        let params = ModelParams::deffuant(2, 1).unwrap();
        let lattice = LatticeSpec::ring(5).unwrap();
        let mut eng = Engine::from_seed(params, lattice, &InitSpec::Uniform, 2, EventMode::Faithful).unwrap();
        let mut log = CsvEventLog::new(Vec::new()).unwrap();
        run(&mut eng, &StopCondition::after_events(3), &mut log);
        let text = String::from_utf8(log.finish().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "event_index,time,site,level,direction,active,annihilated");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,"));
        assert_eq!(lines[3].split(',').count(), 7);
    }

    #[test]
    fn nth_set_bit_selects_in_order() {
        assert_eq!(nth_set_bit(0b1011_0100, 0), 2);
        assert_eq!(nth_set_bit(0b1011_0100, 1), 4);
        assert_eq!(nth_set_bit(0b1011_0100, 3), 7);
    }
}
