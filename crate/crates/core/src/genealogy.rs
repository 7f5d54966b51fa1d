//! Ancestry of opinions through chains of active arrows.
//!
//! Following active level-`i` arrows backwards in time from `(x, t)` always
//! leads to a single site at time 0 whose issue-`i` opinion `(x, t)` carries.
//! The log stores each active arrow once and keeps two indexes keyed by the
//! arrow's target: one per `(level, site)` and one per site over all levels.

use std::io::{self, Write};

use crate::engine::{ArrowEvent, LatticeState, Observer};
use crate::error::LogError;
use crate::opinion::{LatticeSpec, OpinionProfile};
use crate::particles::ParticleView;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActiveArrow {
    pub time: f64,
    pub from: u32,
    pub to: u32,
    pub level: u8,
}

/// Time-ordered active arrows of one run.
#[derive(Clone, Debug)]
pub struct ActiveArrowLog {
    lattice: LatticeSpec,
    issues: u32,
    arrows: Vec<ActiveArrow>,
    /// `by_level[level * L + to]`: indices into `arrows`.
    by_level: Vec<Vec<u32>>,
    /// `by_site[to]`: indices into `arrows`, all levels.
    by_site: Vec<Vec<u32>>,
    error: Option<LogError>,
}

/// Result of a backward walk.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Lineage {
    pub ancestor: usize,
    /// Number of arrows followed.
    pub hops: usize,
}

impl ActiveArrowLog {
    pub fn new(lattice: LatticeSpec, issues: u32) -> Self {
        let sites = lattice.sites();
        Self {
            lattice,
            issues,
            arrows: Vec::new(),
            by_level: vec![Vec::new(); sites * issues as usize],
            by_site: vec![Vec::new(); sites],
            error: None,
        }
    }

    pub fn push(&mut self, arrow: ActiveArrow) -> Result<(), LogError> {
        if let Some(last) = self.arrows.last() {
            if arrow.time <= last.time {
                return Err(LogError::NonIncreasingTime { last: last.time, got: arrow.time });
            }
        }
        let (from, to) = (arrow.from as usize, arrow.to as usize);
        let adjacent = self.lattice.distance(from, to) == 1;
        if !adjacent || arrow.level as u32 >= self.issues {
            return Err(LogError::NotNeighbours { from, to });
        }
        let idx = self.arrows.len() as u32;
        self.by_level[arrow.level as usize * self.lattice.sites() + to].push(idx);
        self.by_site[to].push(idx);
        self.arrows.push(arrow);
        Ok(())
    }

    pub fn arrows(&self) -> &[ActiveArrow] {
        &self.arrows
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn issues(&self) -> u32 {
        self.issues
    }

    pub fn error(&self) -> Option<&LogError> {
        self.error.as_ref()
    }

    /// Active level-`level` arrows with time at most `t`.
    pub fn count_at_level(&self, level: u32, t: f64) -> usize {
        self.arrows.iter().take_while(|a| a.time <= t).filter(|a| u32::from(a.level) == level).count()
    }

    /// Latest arrow in `list` strictly before (or at, when `inclusive`) `bound`.
    fn latest_before(&self, list: &[u32], bound: f64, inclusive: bool) -> Option<&ActiveArrow> {
        let n = list.partition_point(|&k| {
            let s = self.arrows[k as usize].time;
            if inclusive {
                s <= bound
            } else {
                s < bound
            }
        });
        n.checked_sub(1).map(|k| &self.arrows[list[k] as usize])
    }

    fn walk<'a>(&'a self, site: usize, t: f64, list_for: impl Fn(usize) -> &'a [u32]) -> Lineage {
        let mut current = site;
        let mut bound = t;
        let mut inclusive = true;
        let mut hops = 0;
        loop {
            match self.latest_before(list_for(current), bound, inclusive) {
                Some(arrow) => {
                    debug_assert_eq!(arrow.to as usize, current);
                    debug_assert!(arrow.time < bound || (inclusive && arrow.time == bound));
                    current = arrow.from as usize;
                    bound = arrow.time;
                    inclusive = false;
                    hops += 1;
                }
                None => return Lineage { ancestor: current, hops },
            }
        }
    }

    /// Backward walk along active level-`level` arrows from `(site, t)`.
    pub fn lineage(&self, site: usize, t: f64, level: u32) -> Lineage {
        let sites = self.lattice.sites();
        self.walk(site, t, |s| &self.by_level[level as usize * sites + s])
    }

    pub fn ancestor(&self, site: usize, t: f64, level: u32) -> usize {
        self.lineage(site, t, level).ancestor
    }

    /// Backward walk that follows active arrows of every level.
    pub fn ancestor_generalized(&self, site: usize, t: f64) -> Lineage {
        self.walk(site, t, |s| &self.by_site[s])
    }

    /// Opinions at time `t` obtained by replaying the log onto `initial`.
    pub fn replay(&self, initial: &[OpinionProfile], t: f64) -> Vec<OpinionProfile> {
        let mut bits: Vec<u64> = initial.iter().map(|u| u.bits()).collect();
        for a in self.arrows.iter().take_while(|a| a.time <= t) {
            let mask = 1u64 << a.level;
            let v = bits[a.from as usize] & mask;
            let to = &mut bits[a.to as usize];
            *to = (*to & !mask) | v;
        }
        bits.into_iter().map(OpinionProfile::from_bits_unchecked).collect()
    }

    /// Ancestor displacement of `origin` at time `t`, per level and maximal.
    pub fn reach_stats(&self, origin: usize, t: f64) -> ReachStats {
        let per_level: Vec<usize> =
            (0..self.issues).map(|i| displacement(&self.lattice, origin, self.ancestor(origin, t, i))).collect();
        ReachStats { max_abs_displacement: per_level.iter().copied().max().unwrap_or(0), per_level }
    }
}

impl Observer for ActiveArrowLog {
    fn observe(&mut self, event: &ArrowEvent, state: &LatticeState, _: &ParticleView) {
        if !event.active || self.error.is_some() {
            return;
        }
        let to = event.target(state.lattice()).expect("active arrow without a target");
        let arrow = ActiveArrow { time: event.time, from: event.site as u32, to: to as u32, level: event.level as u8 };
        if let Err(e) = self.push(arrow) {
            self.error = Some(e);
        }
    }
}

/// Distance between a site and its ancestor; shorter arc on a ring.
pub fn displacement(lattice: &LatticeSpec, site: usize, ancestor: usize) -> usize {
    lattice.distance(site, ancestor)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReachStats {
    pub max_abs_displacement: usize,
    pub per_level: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Probe {
    pub site: usize,
    pub time: f64,
    pub level: u32,
    pub ancestor: usize,
    pub displacement: usize,
}

pub fn probe(log: &ActiveArrowLog, site: usize, time: f64, level: u32) -> Probe {
    let ancestor = log.ancestor(site, time, level);
    Probe { site, time, level, ancestor, displacement: displacement(log.lattice(), site, ancestor) }
}

/// Writes `time,level,ancestor_site,displacement`.
pub fn write_probes<W: Write>(probes: &[Probe], mut out: W) -> io::Result<()> {
    writeln!(out, "time,level,ancestor_site,displacement")?;
    for p in probes {
        writeln!(out, "{:?},{},{},{}", p.time, p.level, p.ancestor, p.displacement)?;
    }
    Ok(())
}
