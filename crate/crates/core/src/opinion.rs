//! Opinions, model parameters, lattice geometry and initial distributions.

use std::fmt;

use num_rational::BigRational;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::scalar::{binomial, Scalar};

pub const MAX_ISSUES: u32 = 64;

/// Largest lattice the engine indexes with 32-bit slots.
pub const MAX_SITES: usize = u32::MAX as usize - 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dynamics {
    /// Interaction iff the opinion distance is at most the threshold.
    Deffuant,
    /// Interaction probability `1 - distance / F` (two-state Axelrod).
    Axelrod,
}

impl fmt::Display for Dynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dynamics::Deffuant => write!(f, "deffuant"),
            Dynamics::Axelrod => write!(f, "axelrod"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelParams {
    issues: u32,
    theta: u32,
    dynamics: Dynamics,
}

impl ModelParams {
    pub fn new(issues: u32, theta: u32, dynamics: Dynamics) -> Result<Self, ModelError> {
        if issues == 0 || issues > MAX_ISSUES {
            return Err(ModelError::IssuesOutOfRange(issues));
        }
        if theta > issues {
            return Err(ModelError::ThresholdOutOfRange { issues, theta });
        }
        Ok(Self { issues, theta, dynamics })
    }

    pub fn deffuant(issues: u32, theta: u32) -> Result<Self, ModelError> {
        Self::new(issues, theta, Dynamics::Deffuant)
    }

    pub fn axelrod(issues: u32, theta: u32) -> Result<Self, ModelError> {
        Self::new(issues, theta, Dynamics::Axelrod)
    }

    /// Number of issues `F`.
    pub fn issues(&self) -> u32 {
        self.issues
    }

    pub fn theta(&self) -> u32 {
        self.theta
    }

    pub fn dynamics(&self) -> Dynamics {
        self.dynamics
    }

    /// Largest pile size whose particles still jump at a positive rate.
    ///
    /// Deffuant piles freeze above `theta`; Axelrod piles freeze only at `F`.
    pub fn mobile_limit(&self) -> u32 {
        match self.dynamics {
            Dynamics::Deffuant => self.theta,
            Dynamics::Axelrod => self.issues - 1,
        }
    }

    /// Bit mask selecting the `F` valid opinion bits.
    pub fn mask(&self) -> u64 {
        issue_mask(self.issues)
    }
}

pub(crate) fn issue_mask(issues: u32) -> u64 {
    if issues >= 64 {
        u64::MAX
    } else {
        (1u64 << issues) - 1
    }
}

/// One vertex of the hypercube `{0,1}^F`; bit `i` is the opinion on issue `i`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(transparent)]
pub struct OpinionProfile(u64);

impl OpinionProfile {
    pub fn new(bits: u64, issues: u32) -> Result<Self, ModelError> {
        if issues == 0 || issues > MAX_ISSUES {
            return Err(ModelError::IssuesOutOfRange(issues));
        }
        if bits & !issue_mask(issues) != 0 {
            return Err(ModelError::ProfileOutOfRange { issues, bits });
        }
        Ok(Self(bits))
    }

    /// Builds a profile without checking the high bits.
    pub(crate) fn from_bits_unchecked(bits: u64) -> Self {
        Self(bits)
    }

    /// `u_-`: against every issue.
    pub fn all_against() -> Self {
        Self(0)
    }

    /// `u_+`: in favour of every issue.
    pub fn all_in_favour(issues: u32) -> Self {
        Self(issue_mask(issues))
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn bit(self, level: u32) -> bool {
        (self.0 >> level) & 1 == 1
    }

    pub(crate) fn flip(&mut self, level: u32) {
        self.0 ^= 1u64 << level;
    }
}

impl fmt::Display for OpinionProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

/// Number of issues on which two profiles disagree.
pub fn hamming(u: OpinionProfile, v: OpinionProfile) -> u32 {
    (u.0 ^ v.0).count_ones()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InitSpec {
    /// Independent fair coin per site and issue.
    Uniform,
    /// `u_-` and `u_+` each with probability `1/2 - (2^{F-1} - 1) rho`, every other profile `rho`.
    Biased { rho: BigRational },
}

impl InitSpec {
    pub fn validate(&self, issues: u32) -> Result<(), ModelError> {
        if issues == 0 || issues > MAX_ISSUES {
            return Err(ModelError::IssuesOutOfRange(issues));
        }
        match self {
            InitSpec::Uniform => Ok(()),
            InitSpec::Biased { rho } => check_rho(issues, rho),
        }
    }

    /// Probability that a single site starts with profile `u`.
    pub fn site_probability(&self, issues: u32, u: OpinionProfile) -> Result<BigRational, ModelError> {
        self.validate(issues)?;
        if u.0 & !issue_mask(issues) != 0 {
            return Err(ModelError::ProfileOutOfRange { issues, bits: u.0 });
        }
        Ok(match self {
            InitSpec::Uniform => BigRational::half_pow(issues),
            InitSpec::Biased { rho } => {
                if u == OpinionProfile::all_against() || u == OpinionProfile::all_in_favour(issues) {
                    pole_probability(issues, rho)
                } else {
                    rho.clone()
                }
            }
        })
    }
}

fn check_rho<T: Scalar>(issues: u32, rho: &T) -> Result<(), ModelError> {
    if *rho < T::zero() || *rho >= T::half_pow(issues) {
        return Err(ModelError::RhoOutOfRange { issues, rho: rho.to_string() });
    }
    Ok(())
}

/// Probability `1/2 - (2^{F-1} - 1) rho` of each of the two designated profiles.
pub fn pole_probability<T: Scalar>(issues: u32, rho: &T) -> T {
    let others = T::from_u128((1u128 << (issues - 1)) - 1);
    T::ratio(1, 2) - others * rho.clone()
}

/// Draws single-site profiles from an [`InitSpec`].
#[derive(Clone, Debug)]
pub struct SiteSampler {
    mask: u64,
    kind: SamplerKind,
}

#[derive(Clone, Debug)]
enum SamplerKind {
    Uniform,
    Biased { pole: f64 },
}

impl SiteSampler {
    pub fn new(init: &InitSpec, issues: u32) -> Result<Self, ModelError> {
        init.validate(issues)?;
        let mask = issue_mask(issues);
        let kind = match init {
            InitSpec::Uniform => SamplerKind::Uniform,
            InitSpec::Biased { rho } => SamplerKind::Biased { pole: pole_probability(issues, rho).to_f64() },
        };
        Ok(Self { mask, kind })
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> OpinionProfile {
        match self.kind {
            SamplerKind::Uniform => OpinionProfile(rng.next_u64() & self.mask),
            SamplerKind::Biased { pole } => {
                let v: f64 = rng.random();
                if v < pole {
                    OpinionProfile(0)
                } else if v < 2.0 * pole || self.mask == 1 {
                    OpinionProfile(self.mask)
                } else {
                    loop {
                        let bits = rng.next_u64() & self.mask;
                        if bits != 0 && bits != self.mask {
                            return OpinionProfile(bits);
                        }
                    }
                }
            }
        }
    }
}

/// Draws one site from `init`. Builds a sampler per call; use [`SiteSampler`] in loops.
pub fn sample_site<R: RngCore + ?Sized>(
    init: &InitSpec,
    issues: u32,
    rng: &mut R,
) -> Result<OpinionProfile, ModelError> {
    Ok(SiteSampler::new(init, issues)?.sample(rng))
}

/// `P(zeta_0(e) = j) = C(F, j) 2^{-F}` under the uniform product measure.
pub fn pile_pmf_uniform<T: Scalar>(issues: u32, j: u32) -> Result<T, ModelError> {
    if issues == 0 || issues > MAX_ISSUES {
        return Err(ModelError::IssuesOutOfRange(issues));
    }
    if j > issues {
        return Err(ModelError::PileSizeOutOfRange { issues, j });
    }
    Ok(T::from_u128(binomial(issues, j)) * T::half_pow(issues))
}

/// Initial pile-size law under the biased product measure.
///
/// `j = F` and `0 < j < F` count ordered neighbour pairs at distance `j` by how
/// many of them involve a designated profile; the `j = 0` mass is the complement.
pub fn pile_pmf_biased<T: Scalar>(issues: u32, rho: &T, j: u32) -> Result<T, ModelError> {
    if issues == 0 || issues > MAX_ISSUES {
        return Err(ModelError::IssuesOutOfRange(issues));
    }
    if j > issues {
        return Err(ModelError::PileSizeOutOfRange { issues, j });
    }
    check_rho(issues, rho)?;
    if j == 0 {
        let mut rest = T::zero();
        for k in 1..=issues {
            rest = rest + biased_pair_mass(issues, rho, k);
        }
        return Ok(T::one() - rest);
    }
    Ok(biased_pair_mass(issues, rho, j))
}

fn biased_pair_mass<T: Scalar>(issues: u32, rho: &T, j: u32) -> T {
    let pole = pole_probability(issues, rho);
    let profiles = T::from_u128(1u128 << issues);
    let rho2 = rho.clone() * rho.clone();
    if j == issues {
        T::from_i64(2) * pole.clone() * pole + (profiles - T::from_i64(2)) * rho2
    } else {
        let c = T::from_u128(binomial(issues, j));
        T::from_i64(4) * c.clone() * pole * rho.clone() + (profiles - T::from_i64(4)) * c * rho2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    FreeInterval,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Periodic => write!(f, "ring"),
            Boundary::FreeInterval => write!(f, "interval"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    pub fn sign(self) -> i64 {
        match self {
            Direction::Left => -1,
            Direction::Right => 1,
        }
    }
}

/// Sites `0..L` on a ring or a segment. Edge `e` joins sites `e` and `e + 1` (mod `L` on the ring).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeSpec {
    sites: usize,
    boundary: Boundary,
}

impl LatticeSpec {
    pub fn new(sites: usize, boundary: Boundary) -> Result<Self, ModelError> {
        if sites < 3 {
            return Err(ModelError::LatticeTooSmall(sites));
        }
        if sites > MAX_SITES {
            return Err(ModelError::LatticeTooLarge(sites));
        }
        Ok(Self { sites, boundary })
    }

    pub fn ring(sites: usize) -> Result<Self, ModelError> {
        Self::new(sites, Boundary::Periodic)
    }

    pub fn interval(sites: usize) -> Result<Self, ModelError> {
        Self::new(sites, Boundary::FreeInterval)
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn edges(&self) -> usize {
        match self.boundary {
            Boundary::Periodic => self.sites,
            Boundary::FreeInterval => self.sites - 1,
        }
    }

    pub fn endpoints(&self, edge: usize) -> (usize, usize) {
        (edge, (edge + 1) % self.sites)
    }

    pub fn neighbour(&self, site: usize, dir: Direction) -> Option<usize> {
        match (self.boundary, dir) {
            (Boundary::Periodic, Direction::Right) => Some((site + 1) % self.sites),
            (Boundary::Periodic, Direction::Left) => Some((site + self.sites - 1) % self.sites),
            (Boundary::FreeInterval, Direction::Right) => (site + 1 < self.sites).then_some(site + 1),
            (Boundary::FreeInterval, Direction::Left) => site.checked_sub(1),
        }
    }

    /// Edge crossed by a step from `site` in direction `dir`.
    pub fn edge_towards(&self, site: usize, dir: Direction) -> Option<usize> {
        match (self.boundary, dir) {
            (_, Direction::Right) => self.neighbour(site, dir).map(|_| site),
            (_, Direction::Left) => self.neighbour(site, dir),
        }
    }

    /// Lattice distance: shorter arc on the ring, `|a - b|` on the interval.
    pub fn distance(&self, a: usize, b: usize) -> usize {
        let d = a.abs_diff(b);
        match self.boundary {
            Boundary::Periodic => d.min(self.sites - d),
            Boundary::FreeInterval => d,
        }
    }

    pub fn is_boundary_edge(&self, edge: usize) -> bool {
        self.boundary == Boundary::FreeInterval && (edge == 0 || edge + 2 == self.sites)
    }
}
