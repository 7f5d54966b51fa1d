//! Per-edge contribution bookkeeping.
//!
//! For every edge the ledger counts active particles that are eliminated by a
//! jump onto that edge, either by annihilating there or by landing in a pile
//! that is (or becomes) frozen.
//!
//! * An edge that starts live (or empty) stops counting at the first active jump
//!   of one of its original particles, or when an incoming particle annihilates
//!   one of them (the incoming particle is counted first). Its tally is
//!   `count - initial_size`.
//! * An edge that starts as a blockade stops counting as soon as its pile drops
//!   to the mobile limit. At that moment exactly `limit` original particles are
//!   released, so the tally is `count - limit`. A blockade that is never broken
//!   keeps `tally = count`.

use std::io::{self, Write};

use crate::engine::{ArrowEvent, LatticeState, Observer};
use crate::error::LedgerError;
use crate::particles::ParticleView;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    /// Initial pile at most the mobile limit (includes empty edges).
    Live,
    Blockade,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Watching,
    Closed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeAccount {
    pub initial_size: u32,
    pub kind: EdgeKind,
    pub phase: Phase,
    /// Eliminated incoming particles counted while watching.
    pub count: u32,
    /// Levels still held by particles present at time 0.
    originals: u64,
    /// Amount subtracted from `count` once the account closes.
    released: u32,
}

impl EdgeAccount {
    pub fn tally(&self) -> i64 {
        let debit = match self.kind {
            EdgeKind::Live => self.initial_size,
            EdgeKind::Blockade => self.released,
        };
        i64::from(self.count) - i64::from(debit)
    }

    pub fn is_closed(&self) -> bool {
        self.phase == Phase::Closed
    }

    pub fn originals(&self) -> u64 {
        self.originals
    }
}

#[derive(Clone, Debug)]
pub struct ContributionLedger {
    limit: u32,
    accounts: Vec<EdgeAccount>,
    last_time: f64,
    error: Option<LedgerError>,
}

impl ContributionLedger {
    /// Opens one account per edge from the configuration at time 0.
    pub fn new(view: &ParticleView) -> Self {
        let limit = view.mobile_limit();
        let accounts = (0..view.edges())
            .map(|e| {
                let zeta = view.zeta(e);
                EdgeAccount {
                    initial_size: zeta,
                    kind: if zeta <= limit { EdgeKind::Live } else { EdgeKind::Blockade },
                    phase: Phase::Watching,
                    count: 0,
                    originals: view.xi(e),
                    released: 0,
                }
            })
            .collect();
        Self { limit, accounts, last_time: 0.0, error: None }
    }

    /// Updates the accounts for one event. `view` is the configuration after the event.
    pub fn observe(&mut self, event: &ArrowEvent, view: &ParticleView) -> Result<(), LedgerError> {
        if event.time < self.last_time {
            return Err(LedgerError::OutOfOrder { last: self.last_time, got: event.time });
        }
        self.last_time = event.time;
        if !event.active {
            return Ok(());
        }
        let level_bit = 1u64 << event.level;
        let from = event.edge.expect("active event without an edge");

        let source = &mut self.accounts[from];
        if source.originals & level_bit != 0 {
            source.originals &= !level_bit;
            if source.kind == EdgeKind::Live && source.phase == Phase::Watching {
                source.phase = Phase::Closed;
            }
        }

        let Some(to) = event.landing else { return Ok(()) };
        let limit = self.limit;
        let target = &mut self.accounts[to];
        if event.annihilated {
            let hit_original = target.originals & level_bit != 0;
            target.originals &= !level_bit;
            if target.phase == Phase::Watching {
                target.count += 1;
                match target.kind {
                    EdgeKind::Live if hit_original => target.phase = Phase::Closed,
                    EdgeKind::Blockade if view.zeta(to) <= limit => {
                        target.phase = Phase::Closed;
                        target.released = view.zeta(to);
                    }
                    _ => {}
                }
            }
        } else if target.phase == Phase::Watching && view.zeta(to) > limit {
            target.count += 1;
        }
        Ok(())
    }

    pub fn accounts(&self) -> &[EdgeAccount] {
        &self.accounts
    }

    pub fn account(&self, edge: usize) -> &EdgeAccount {
        &self.accounts[edge]
    }

    /// First ordering violation seen through the [`Observer`] interface, if any.
    pub fn error(&self) -> Option<&LedgerError> {
        self.error.as_ref()
    }

    /// Consumes the ledger, surfacing any deferred error.
    pub fn finalize(self) -> Result<Vec<EdgeAccount>, LedgerError> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.accounts),
        }
    }

    /// Writes `edge_index,initial_size,tally,closed_flag`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "edge_index,initial_size,tally,closed_flag")?;
        for (e, a) in self.accounts.iter().enumerate() {
            writeln!(out, "{},{},{},{}", e, a.initial_size, a.tally(), u8::from(a.is_closed()))?;
        }
        Ok(())
    }
}

impl Observer for ContributionLedger {
    fn observe(&mut self, event: &ArrowEvent, _: &LatticeState, view: &ParticleView) {
        if self.error.is_none() {
            if let Err(e) = ContributionLedger::observe(self, event, view) {
                self.error = Some(e);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opinion::Direction;

    fn view(limit: u32, issues: u32, xi: &[u64]) -> ParticleView {
        ParticleView::from_occupations(issues, limit, xi.to_vec())
    }

    /// Applies a jump by hand: the particle at (from, level) moves to `to`.
    fn jump(v: &mut ParticleView, time: f64, from: usize, to: Option<usize>, level: u32, dir: Direction) -> ArrowEvent {
        let pile = v.zeta(from);
        v.toggle(from, level);
        let annihilated = match to {
            Some(t) => !v.toggle(t, level),
            None => false,
        };
        ArrowEvent {
            index: 0,
            time,
            site: 0,
            level,
            direction: dir,
            mark: 0.0,
            edge: Some(from),
            occupied: true,
            pile,
            active: true,
            landing: to,
            annihilated,
        }
    }

    #[test]
    fn live_edge_jumping_first_pays_its_size() {
        // F = 3, theta = 2; edge 1 holds two particles, neighbours empty
        let mut v = view(2, 3, &[0, 0b011, 0, 0]);
        let mut ledger = ContributionLedger::new(&v);
        let ev = jump(&mut v, 1.0, 1, Some(2), 0, Direction::Right);
        ledger.observe(&ev, &v).unwrap();
        let a = ledger.account(1);
        assert!(a.is_closed());
        assert_eq!(a.tally(), -2);
        assert_eq!(ledger.account(2).tally(), 0);
    }

    #[test]
    fn broken_blockade_pays_j_minus_two_theta() {
        // F = 5, theta = 2, edge 2 starts with a pile of 4 (blockade)
        let mut v = view(2, 5, &[0b00001, 0b00010, 0b01111, 0, 0]);
        let mut ledger = ContributionLedger::new(&v);
        assert_eq!(ledger.account(2).kind, EdgeKind::Blockade);
        let ev = jump(&mut v, 1.0, 0, Some(1), 0, Direction::Right);
        ledger.observe(&ev, &v).unwrap();
        let ev = jump(&mut v, 2.0, 1, Some(2), 0, Direction::Right);
        ledger.observe(&ev, &v).unwrap();
        assert!(!ledger.account(2).is_closed());
        let ev = jump(&mut v, 3.0, 1, Some(2), 1, Direction::Right);
        ledger.observe(&ev, &v).unwrap();
        let a = ledger.account(2);
        assert!(a.is_closed());
        assert_eq!(a.tally(), 4 - 2 * 2);
    }

    #[test]
    fn freezing_jump_adds_two() {
        // F = 5, theta = 2, pile of 3 at edge 1; first arrival is on a free level
        let mut v = view(2, 5, &[0b10000, 0b00111, 0b00011, 0]);
        let mut ledger = ContributionLedger::new(&v);
        let ev = jump(&mut v, 1.0, 0, Some(1), 4, Direction::Right);
        ledger.observe(&ev, &v).unwrap();
        assert_eq!(v.zeta(1), 4);
        assert_eq!(ledger.account(1).count, 1);
        let ev = jump(&mut v, 2.0, 2, Some(1), 0, Direction::Left);
        ledger.observe(&ev, &v).unwrap();
        let ev = jump(&mut v, 3.0, 2, Some(1), 1, Direction::Left);
        ledger.observe(&ev, &v).unwrap();
        let a = ledger.account(1);
        assert!(a.is_closed());
        assert_eq!(a.tally(), 3 - 2 * 2 + 2);
    }

    #[test]
    fn incoming_annihilation_of_an_original_counts_then_closes() {
        let mut v = view(1, 2, &[0b01, 0b01, 0]);
        let mut ledger = ContributionLedger::new(&v);
        let ev = jump(&mut v, 1.0, 0, Some(1), 0, Direction::Right);
        ledger.observe(&ev, &v).unwrap();
        let a = ledger.account(1);
        assert!(a.is_closed());
        assert_eq!(a.tally(), 0);
        // edge 0's own particle left first
        assert_eq!(ledger.account(0).tally(), -1);
    }

    #[test]
    fn closed_accounts_are_frozen() {
        let mut v = view(1, 2, &[0b01, 0, 0, 0]);
        let mut ledger = ContributionLedger::new(&v);
        let ev = jump(&mut v, 1.0, 0, Some(1), 0, Direction::Right);
        ledger.observe(&ev, &v).unwrap();
        let before = *ledger.account(0);
        let ev = jump(&mut v, 2.0, 1, Some(0), 0, Direction::Left);
        ledger.observe(&ev, &v).unwrap();
        assert_eq!(*ledger.account(0), EdgeAccount { originals: 0, ..before });
    }

    #[test]
    fn out_of_order_events_are_rejected() {
        let mut v = view(1, 2, &[0b01, 0, 0]);
        let mut ledger = ContributionLedger::new(&v);
        let ev = jump(&mut v, 2.0, 0, Some(1), 0, Direction::Right);
        ledger.observe(&ev, &v).unwrap();
        let mut late = ev;
        late.time = 1.0;
        assert!(matches!(ledger.observe(&late, &v), Err(LedgerError::OutOfOrder { .. })));
    }

    #[test]
    fn csv_export() {
        let v = view(1, 2, &[0b01, 0b11]);
        let ledger = ContributionLedger::new(&v);
        let mut buf = Vec::new();
        ledger.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "edge_index,initial_size,tally,closed_flag\n0,1,-1,0\n1,2,0,0\n");
    }
}
