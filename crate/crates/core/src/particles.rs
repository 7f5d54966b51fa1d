//! The coupled annihilating-random-walk picture.
//!
//! Edge `e` carries a particle at level `i` exactly when its two endpoint sites
//! disagree on issue `i`, so the per-edge occupation word is the XOR of the
//! endpoint profiles and the pile size is its popcount.

use std::io::{self, Write};

use crate::engine::LatticeState;
use crate::opinion::LatticeSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeClass {
    Empty,
    /// `0 < zeta <= theta`: particles jump at a positive rate.
    Live,
    /// `zeta > theta`: particles are frozen.
    Blockade,
}

/// Edge class as a pure function of the pile size.
pub fn class_of(zeta: u32, theta: u32) -> EdgeClass {
    if zeta == 0 {
        EdgeClass::Empty
    } else if zeta <= theta {
        EdgeClass::Live
    } else {
        EdgeClass::Blockade
    }
}

/// Occupations `xi(e, i)` and pile sizes `zeta(e)`, with running totals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParticleView {
    issues: u32,
    /// Largest mobile pile size (the confidence threshold for Deffuant dynamics).
    mobile_limit: u32,
    xi: Vec<u64>,
    zeta: Vec<u8>,
    total_particles: u64,
    live_particles: u64,
    live_edges: usize,
    blockades: usize,
}

impl ParticleView {
    /// Builds the view from per-edge occupation words.
    pub fn from_occupations(issues: u32, mobile_limit: u32, xi: Vec<u64>) -> Self {
        let mut view = Self {
            issues,
            mobile_limit,
            zeta: xi.iter().map(|w| w.count_ones() as u8).collect(),
            xi,
            total_particles: 0,
            live_particles: 0,
            live_edges: 0,
            blockades: 0,
        };
        for e in 0..view.xi.len() {
            view.account(view.zeta[e] as u32, 1);
        }
        view
    }

    fn account(&mut self, zeta: u32, sign: i64) {
        let z = i64::from(zeta) * sign;
        self.total_particles = (self.total_particles as i64 + z) as u64;
        match class_of(zeta, self.mobile_limit) {
            EdgeClass::Empty => {}
            EdgeClass::Live => {
                self.live_particles = (self.live_particles as i64 + z) as u64;
                self.live_edges = (self.live_edges as i64 + sign) as usize;
            }
            EdgeClass::Blockade => {
                self.blockades = (self.blockades as i64 + sign) as usize;
            }
        }
    }

    /// Toggles the particle at `(edge, level)`; returns the new occupation bit.
    pub(crate) fn toggle(&mut self, edge: usize, level: u32) -> bool {
        let old = self.zeta[edge] as u32;
        self.account(old, -1);
        self.xi[edge] ^= 1u64 << level;
        let new = self.xi[edge].count_ones();
        self.zeta[edge] = new as u8;
        self.account(new, 1);
        (self.xi[edge] >> level) & 1 == 1
    }

    pub fn issues(&self) -> u32 {
        self.issues
    }

    pub fn mobile_limit(&self) -> u32 {
        self.mobile_limit
    }

    pub fn edges(&self) -> usize {
        self.xi.len()
    }

    pub fn xi(&self, edge: usize) -> u64 {
        self.xi[edge]
    }

    pub fn occupied(&self, edge: usize, level: u32) -> bool {
        (self.xi[edge] >> level) & 1 == 1
    }

    pub fn zeta(&self, edge: usize) -> u32 {
        u32::from(self.zeta[edge])
    }

    pub fn occupations(&self) -> &[u64] {
        &self.xi
    }

    pub fn total_particles(&self) -> u64 {
        self.total_particles
    }

    /// Particles sitting on live edges.
    pub fn live_particles(&self) -> u64 {
        self.live_particles
    }

    pub fn live_edges(&self) -> usize {
        self.live_edges
    }

    pub fn blockades(&self) -> usize {
        self.blockades
    }

    pub fn frozen_particles(&self) -> u64 {
        self.total_particles - self.live_particles
    }

    /// No particle can ever move again.
    pub fn is_absorbed(&self) -> bool {
        self.live_particles == 0
    }

    pub fn class(&self, edge: usize) -> EdgeClass {
        class_of(self.zeta(edge), self.mobile_limit)
    }

    /// Writes `edge_index,zeta,xi_bits_hex`.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "edge_index,zeta,xi_bits_hex")?;
        for (e, (&w, &z)) in self.xi.iter().zip(&self.zeta).enumerate() {
            writeln!(out, "{},{},{:x}", e, z, w)?;
        }
        Ok(())
    }
}

/// Recomputes the view from scratch: `xi(e) = eta(x) XOR eta(x+1)`.
pub fn derive(state: &LatticeState) -> ParticleView {
    let lattice: &LatticeSpec = state.lattice();
    let opinions = state.opinions();
    let xi = (0..lattice.edges())
        .map(|e| {
            let (a, b) = lattice.endpoints(e);
            opinions[a].bits() ^ opinions[b].bits()
        })
        .collect();
    ParticleView::from_occupations(state.params().issues(), state.params().mobile_limit(), xi)
}

pub fn classify(view: &ParticleView, theta: u32) -> Vec<EdgeClass> {
    (0..view.edges()).map(|e| class_of(view.zeta(e), theta)).collect()
}

/// `(sum_e xi(e, i)) mod 2`.
pub fn level_parity(view: &ParticleView, level: u32) -> u32 {
    view.xi.iter().map(|w| ((w >> level) & 1) as u32).sum::<u32>() % 2
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Densities {
    pub active_per_edge: f64,
    pub frozen_per_edge: f64,
    pub blockade_fraction: f64,
}

/// Edge averages of active particles, frozen particles and blockades.
pub fn densities(view: &ParticleView) -> Densities {
    let edges = view.edges().max(1) as f64;
    Densities {
        active_per_edge: view.live_particles() as f64 / edges,
        frozen_per_edge: view.frozen_particles() as f64 / edges,
        blockade_fraction: view.blockades() as f64 / edges,
    }
}
