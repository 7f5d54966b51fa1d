//! Closed-form weight expectations, their folded lower bounds, and the phase
//! classification of `(F, theta)`.
//!
//! Every formula is generic over [`Scalar`]; instantiate with
//! [`Rational`](crate::Rational) for exact values.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::opinion::{pile_pmf_biased, pile_pmf_uniform, pole_probability, MAX_ISSUES};
use crate::scalar::{binomial, Scalar};

fn check(issues: u32, theta: u32) -> Result<(), ModelError> {
    if issues == 0 || issues > MAX_ISSUES {
        return Err(ModelError::IssuesOutOfRange(issues));
    }
    if theta > issues {
        return Err(ModelError::ThresholdOutOfRange { issues, theta });
    }
    Ok(())
}

fn p<T: Scalar>(issues: u32, j: u32) -> T {
    pile_pmf_uniform(issues, j).expect("pile size checked by caller")
}

/// Conditional laws of the weight given the initial pile size.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightLaw<T> {
    issues: u32,
    theta: u32,
    /// `atoms[j]`: `(value, probability)` pairs with positive probability, increasing values.
    atoms: Vec<Vec<(i64, T)>>,
}

impl<T: Scalar> WeightLaw<T> {
    pub fn issues(&self) -> u32 {
        self.issues
    }

    pub fn theta(&self) -> u32 {
        self.theta
    }

    pub fn atoms(&self, j: u32) -> &[(i64, T)] {
        &self.atoms[j as usize]
    }

    /// `P(weight <= x | zeta_0 = j)`.
    pub fn cdf(&self, j: u32, x: i64) -> T {
        self.atoms[j as usize].iter().filter(|(v, _)| *v <= x).fold(T::zero(), |acc, (_, q)| acc + q.clone())
    }

    pub fn conditional_mean(&self, j: u32) -> T {
        self.atoms[j as usize].iter().fold(T::zero(), |acc, (v, q)| acc + T::from_i64(*v) * q.clone())
    }
}

/// Weight law: `-j` when `j <= theta`; otherwise `j - 2 theta` with probability
/// `j/F` and `j - 2 theta + 2` with probability `1 - j/F`.
pub fn weight_law<T: Scalar>(issues: u32, theta: u32) -> Result<WeightLaw<T>, ModelError> {
    check(issues, theta)?;
    let f = i64::from(issues);
    let t = i64::from(theta);
    let atoms = (0..=issues)
        .map(|j| {
            let j = i64::from(j);
            if j <= t {
                vec![(-j, T::one())]
            } else {
                let hit = T::ratio(j, f);
                let miss = T::one() - hit.clone();
                [(j - 2 * t, hit), (j - 2 * t + 2, miss)].into_iter().filter(|(_, q)| !q.is_zero()).collect()
            }
        })
        .collect();
    Ok(WeightLaw { issues, theta, atoms })
}

/// Coefficient of `p_j` in the expected weight.
fn uniform_coefficient<T: Scalar>(issues: u32, theta: u32, j: u32) -> T {
    let jj = T::from_i64(i64::from(j));
    if j <= theta {
        -jj
    } else {
        let f = i64::from(issues);
        jj.clone() + T::from_i64(2) * (T::one() - T::ratio(i64::from(j), f) - T::from_i64(i64::from(theta)))
    }
}

/// Expected weight of one edge under the uniform product measure:
/// `sum_{j<=theta} (-j) p_j + sum_{j>theta} (j + 2(1 - j/F - theta)) p_j`.
pub fn expected_weight_uniform<T: Scalar>(issues: u32, theta: u32) -> Result<T, ModelError> {
    check(issues, theta)?;
    Ok((0..=issues).fold(T::zero(), |acc, j| acc + uniform_coefficient::<T>(issues, theta, j) * p::<T>(issues, j)))
}

/// Same expectation computed by summing the conditional laws against `p_j`.
pub fn expected_weight_from_law<T: Scalar>(law: &WeightLaw<T>) -> T {
    (0..=law.issues).fold(T::zero(), |acc, j| acc + law.conditional_mean(j) * p::<T>(law.issues, j))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FoldVariant {
    Sharp,
    Weak,
}

/// Lower bound for the uniform expected weight obtained by pairing `p_j` with
/// `p_{F-j}` (the two are equal).
///
/// Pairs `j < F/2` contribute `(c_j + c_{F-j}) p_j` (`Sharp`); the `Weak` variant
/// further lowers the pairs with `j <= theta` to `F - 2(theta + j)`. For even `F`
/// the unpaired middle term `c_{F/2} p_{F/2}` is kept only when negative.
///
/// When `F >= 2 theta + 1` and `F` is odd this is exactly the sum over
/// `[0, theta]` and `[theta + 1, K_-]` with coefficients
/// `F - 2 theta - 2(1 - 1/F) j` and `F - 4 theta + 2`. For odd `F`, `Sharp` equals
/// the expectation for every `theta`.
pub fn folded_bound<T: Scalar>(issues: u32, theta: u32, variant: FoldVariant) -> Result<T, ModelError> {
    check(issues, theta)?;
    let c = |j: u32| uniform_coefficient::<T>(issues, theta, j);
    let mut total = T::zero();
    for j in (0..=issues).take_while(|&j| 2 * j < issues) {
        let paired = match variant {
            FoldVariant::Weak if j <= theta => T::from_i64(i64::from(issues) - 2 * i64::from(theta + j)),
            _ => c(j) + c(issues - j),
        };
        total = total + paired * p::<T>(issues, j);
    }
    if issues.is_multiple_of(2) {
        let middle = c(issues / 2);
        if middle < T::zero() {
            total = total + middle * p::<T>(issues, issues / 2);
        }
    }
    Ok(total)
}

/// Intermediate quantities of the improved weight for `F = 3`, `theta = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdOneMargin<T> {
    /// A neighbouring edge carries a single particle at another level.
    pub neighbour_probability: T,
    /// Only the left neighbour qualifies.
    pub left_only: T,
    /// Only the right neighbour qualifies.
    pub right_only: T,
    pub both: T,
    /// Chance that the first relevant jump forms the pair, one or two neighbours.
    pub pairing_one: T,
    pub pairing_two: T,
    /// Lower bound on the probability that a lone particle joins a size-two blockade.
    pub blockade_formation: T,
    pub margin: T,
}

/// Expected improved weight for three issues and threshold one.
///
/// One edge in four (the spacing that makes the pairing events independent)
/// gets weight `2X - 1` with `X ~ Bernoulli(P(A))` instead of `-1`.
pub fn threshold_one_margin<T: Scalar>() -> ThresholdOneMargin<T> {
    const F: u32 = 3;
    const SPACING: i64 = 4;
    let f = i64::from(F);
    let p1 = p::<T>(F, 1);
    let neighbour = p1.clone() * T::ratio(f - 1, f);
    let miss = T::one() - neighbour.clone();
    let left_only = neighbour.clone() * miss.clone();
    let right_only = neighbour.clone() * miss;
    let both = neighbour.clone() * neighbour.clone();
    // every involved particle jumps at the same rate in either direction; one
    // (two) of the possible first jumps form the pair
    let options = |particles: i64| T::from_i64(2 * particles);
    let pairing_one = T::one() / options(3);
    let pairing_two = T::from_i64(2) / options(4);
    let formation = pairing_one.clone() * left_only.clone()
        + pairing_one.clone() * right_only.clone()
        + pairing_two.clone() * both.clone();

    let two = T::from_i64(2);
    let improved_share = T::ratio(1, SPACING);
    let plain_share = T::one() - improved_share.clone();
    let improved_mean = two.clone() * formation.clone() - T::one();
    let single = (-plain_share + improved_share * improved_mean) * p1;
    let law = weight_law::<T>(F, 1).expect("fixed parameters are valid");
    let margin = single + law.conditional_mean(2) * p::<T>(F, 2) + law.conditional_mean(3) * p::<T>(F, 3);
    ThresholdOneMargin {
        neighbour_probability: neighbour,
        left_only,
        right_only,
        both,
        pairing_one,
        pairing_two,
        blockade_formation: formation,
        margin,
    }
}

/// Worst-case weight under the biased measure: `-j` for `j <= theta`, `j - 2 theta` otherwise.
pub fn worst_case_weight(theta: u32, j: u32) -> i64 {
    let (j, t) = (i64::from(j), i64::from(theta));
    if j <= t {
        -j
    } else {
        j - 2 * t
    }
}

/// Expected worst-case weight under the biased measure with parameter `rho`.
///
/// Written out term by term: the piles `0 < j < F` with mass
/// `4 C(F,j) rho_- rho + (2^F - 4) C(F,j) rho^2` and the full pile `j = F` with
/// `2 rho_-^2 + (2^F - 2) rho^2`, where `rho_- = 1/2 - (2^{F-1} - 1) rho`.
pub fn expected_weight_biased<T: Scalar>(issues: u32, theta: u32, rho: &T) -> Result<T, ModelError> {
    check(issues, theta)?;
    // validates rho
    pile_pmf_biased(issues, rho, 0)?;
    let pole = pole_probability(issues, rho);
    let profiles = T::from_u128(1u128 << issues);
    let rho2 = rho.clone() * rho.clone();
    let mut total = T::zero();
    for j in 1..issues {
        let c = T::from_u128(binomial(issues, j));
        let mass = T::from_i64(4) * c.clone() * pole.clone() * rho.clone()
            + (profiles.clone() - T::from_i64(4)) * c * rho2.clone();
        total = total + T::from_i64(worst_case_weight(theta, j)) * mass;
    }
    let full = T::from_i64(2) * pole.clone() * pole + (profiles - T::from_i64(2)) * rho2;
    let weight_full = i64::from(issues) - 2 * i64::from(theta);
    Ok(total + T::from_i64(weight_full) * full)
}

/// The same expectation as a pmf summation; used as an independent cross-check.
pub fn expected_weight_biased_from_pmf<T: Scalar>(issues: u32, theta: u32, rho: &T) -> Result<T, ModelError> {
    check(issues, theta)?;
    let mut total = T::zero();
    for j in 0..=issues {
        total = total + T::from_i64(worst_case_weight(theta, j)) * pile_pmf_biased(issues, rho, j)?;
    }
    Ok(total)
}

/// `c0 + c1 rho + c2 rho^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic<T> {
    pub c0: T,
    pub c1: T,
    pub c2: T,
}

impl<T: Scalar> Quadratic<T> {
    pub fn eval(&self, x: &T) -> T {
        self.c0.clone() + x.clone() * (self.c1.clone() + x.clone() * self.c2.clone())
    }

    fn add(self, other: Self) -> Self {
        Self { c0: self.c0 + other.c0, c1: self.c1 + other.c1, c2: self.c2 + other.c2 }
    }

    fn scale(self, k: T) -> Self {
        Self { c0: self.c0 * k.clone(), c1: self.c1 * k.clone(), c2: self.c2 * k }
    }

    fn linear(c0: T, c1: T) -> Self {
        Self { c0, c1, c2: T::zero() }
    }

    /// Product of two polynomials of degree at most one.
    fn product_linear(a: &Self, b: &Self) -> Self {
        Self {
            c0: a.c0.clone() * b.c0.clone(),
            c1: a.c0.clone() * b.c1.clone() + a.c1.clone() * b.c0.clone(),
            c2: a.c1.clone() * b.c1.clone(),
        }
    }
}

/// Biased expected weight as a polynomial in `rho`.
pub fn biased_poly<T: Scalar>(issues: u32, theta: u32) -> Result<Quadratic<T>, ModelError> {
    check(issues, theta)?;
    let others = T::from_u128((1u128 << (issues - 1)) - 1);
    let pole = Quadratic::linear(T::ratio(1, 2), -others);
    let rho = Quadratic::linear(T::zero(), T::one());
    let profiles = T::from_u128(1u128 << issues);
    let rho2 = Quadratic::product_linear(&rho, &rho);
    let pole_rho = Quadratic::product_linear(&pole, &rho);
    let pole2 = Quadratic::product_linear(&pole, &pole);
    let mut total = Quadratic::linear(T::zero(), T::zero());
    for j in 1..issues {
        let c = T::from_u128(binomial(issues, j));
        let mass = pole_rho
            .clone()
            .scale(T::from_i64(4) * c.clone())
            .add(rho2.clone().scale((profiles.clone() - T::from_i64(4)) * c));
        total = total.add(mass.scale(T::from_i64(worst_case_weight(theta, j))));
    }
    let full = pole2.scale(T::from_i64(2)).add(rho2.scale(profiles - T::from_i64(2)));
    Ok(total.add(full.scale(T::from_i64(i64::from(issues) - 2 * i64::from(theta)))))
}

/// Smallest positive root of `q`, if any, in floating point.
pub fn smallest_positive_root<T: Scalar>(q: &Quadratic<T>) -> Option<f64> {
    let (a, b, c) = (q.c2.to_f64(), q.c1.to_f64(), q.c0.to_f64());
    let mut roots = Vec::new();
    if a == 0.0 {
        if b != 0.0 {
            roots.push(-c / b);
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let s = disc.sqrt();
            // numerically stable pair
            let k = -0.5 * (b + b.signum() * s);
            if k != 0.0 {
                roots.push(k / a);
                roots.push(c / k);
            } else {
                roots.push(0.0);
            }
        }
    }
    roots.into_iter().filter(|r| *r > 0.0).min_by(|x, y| x.total_cmp(y))
}

/// Lower bound on `1/2 - 2 exp(-(13/54)^2 (4 theta - 1))`, exact.
///
/// `exp(x)` is bounded below by its Taylor polynomial, so `1/2 - 2/S` with `S` the
/// partial sum is a valid lower bound. Positive means the inequality holds.
pub fn boundary_large_deviation_bound(theta: u32) -> BigRational {
    let eps = BigRational::new(BigInt::from(13), BigInt::from(54));
    let x = eps.clone() * eps * BigRational::from_integer(BigInt::from(4 * i64::from(theta) - 1));
    let mut term = BigRational::one();
    let mut sum = BigRational::one();
    for k in 1..=60u32 {
        term = term * x.clone() / BigRational::from_integer(BigInt::from(k));
        sum += term.clone();
    }
    BigRational::new(BigInt::from(1), BigInt::from(2)) - BigRational::from_integer(BigInt::from(2)) / sum
}

/// `1/2 - 2 P(Z <= theta)` for `Z ~ Binomial(4 theta - 1, 1/2)`, exact.
pub fn boundary_binomial_bound(theta: u32) -> BigRational {
    let f = 4 * theta - 1;
    let tail = (0..=theta).fold(BigRational::zero(), |acc, j| acc + p::<BigRational>(f, j));
    BigRational::new(BigInt::from(1), BigInt::from(2)) - BigRational::from_integer(BigInt::from(2)) * tail
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseRegion {
    /// `F <= theta`: independent voter models.
    VoterReduction,
    ClusteringProved,
    CoexistenceProvedUniform,
    /// Coexistence proved for the biased measure with small `rho` only.
    CoexistenceProvedBiasedOnly,
    Open,
}

impl fmt::Display for PhaseRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PhaseRegion::VoterReduction => "VoterReduction",
            PhaseRegion::ClusteringProved => "ClusteringProved",
            PhaseRegion::CoexistenceProvedUniform => "CoexistenceProvedUniform",
            PhaseRegion::CoexistenceProvedBiasedOnly => "CoexistenceProvedBiasedOnly",
            PhaseRegion::Open => "Open",
        };
        f.write_str(s)
    }
}

pub fn phase_region(issues: u32, theta: u32) -> Result<PhaseRegion, ModelError> {
    check(issues, theta)?;
    let (f, t) = (i64::from(issues), i64::from(theta));
    Ok(if f <= t {
        PhaseRegion::VoterReduction
    } else if t == 0 {
        // nobody ever interacts
        PhaseRegion::CoexistenceProvedUniform
    } else if f == t + 1 {
        PhaseRegion::ClusteringProved
    } else if f >= 4 * t - 1 {
        PhaseRegion::CoexistenceProvedUniform
    } else if f > 2 * t {
        PhaseRegion::CoexistenceProvedBiasedOnly
    } else {
        PhaseRegion::Open
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rational;

    fn r(n: i64, d: i64) -> Rational {
        Rational::ratio(n, d)
    }

    #[test]
    fn weight_law_examples() {
        let law = weight_law::<Rational>(3, 1).unwrap();
        assert_eq!(law.atoms(3), &[(1, r(1, 1))]);
        assert_eq!(law.atoms(2), &[(0, r(2, 3)), (2, r(1, 3))]);
        assert_eq!(law.atoms(1), &[(-1, r(1, 1))]);
        assert_eq!(law.atoms(0), &[(0, r(1, 1))]);
        assert_eq!(law.cdf(2, 0), r(2, 3));
        assert_eq!(law.cdf(2, -1), r(0, 1));
    }

    #[test]
    fn expected_weight_examples() {
        assert_eq!(expected_weight_uniform::<Rational>(3, 1).unwrap(), r(0, 1));
        assert_eq!(expected_weight_uniform::<Rational>(7, 2).unwrap(), r(19, 64));
        assert_eq!(expected_weight_uniform::<Rational>(4, 1).unwrap(), r(5, 8));
    }

    #[test]
    fn f4_theta1_term_by_term() {
        // p = (1, 4, 6, 4, 1)/16; coefficients -1 for j = 1, j + 2(1 - j/4 - 1) = j/2 for j >= 2
        let terms = [r(0, 1), r(-4, 16), r(6, 16), r(6, 16), r(2, 16)];
        let sum = terms.iter().fold(r(0, 1), |a, b| a + b);
        assert_eq!(sum, expected_weight_uniform::<Rational>(4, 1).unwrap());
    }

    #[test]
    fn folded_bound_examples() {
        assert_eq!(folded_bound::<Rational>(7, 2, FoldVariant::Sharp).unwrap(), r(19, 64));
        assert_eq!(folded_bound::<Rational>(8, 2, FoldVariant::Weak).unwrap(), r(33, 64));
        // the displayed binomial combination for F = 7
        let display = (r(3, 1) + r(9, 7) * r(7, 1) - r(3, 7) * r(21, 1) + r(35, 1)) * r(1, 128);
        assert_eq!(display, r(19, 64));
    }

    #[test]
    fn literal_fold_on_its_domain() {
        // F >= 2 theta + 1, odd F: the pairing reproduces the two-sum expression
        for f in (3..=19u32).step_by(2) {
            for t in 0..=((f - 1) / 2) {
                let k_minus = (f - 1) / 2;
                let ff = i64::from(f);
                let mut sharp = r(0, 1);
                let mut weak = r(0, 1);
                for j in 0..=t {
                    let jj = i64::from(j);
                    let pj = p::<Rational>(f, j);
                    sharp += (Rational::from_i64(ff - 2 * i64::from(t)) - r(2 * (ff - 1) * jj, ff)) * pj.clone();
                    weak += Rational::from_i64(ff - 2 * (i64::from(t) + jj)) * pj;
                }
                for j in (t + 1)..=k_minus {
                    let c = Rational::from_i64(ff - 4 * i64::from(t) + 2) * p::<Rational>(f, j);
                    sharp += c.clone();
                    weak += c;
                }
                assert_eq!(folded_bound::<Rational>(f, t, FoldVariant::Sharp).unwrap(), sharp, "F={f} theta={t}");
                assert_eq!(folded_bound::<Rational>(f, t, FoldVariant::Weak).unwrap(), weak, "F={f} theta={t}");
            }
        }
    }

    #[test]
    fn threshold_one_intermediates() {
        let m = threshold_one_margin::<Rational>();
        assert_eq!(m.neighbour_probability, r(1, 4));
        assert_eq!((m.left_only.clone(), m.right_only.clone(), m.both.clone()), (r(3, 16), r(3, 16), r(1, 16)));
        assert_eq!((m.pairing_one.clone(), m.pairing_two.clone()), (r(1, 6), r(1, 4)));
        assert_eq!(m.blockade_formation, r(5, 64));
        assert_eq!(m.margin, r(15, 1024));
        let displayed =
            (r(-3, 4) + r(1, 4) * (r(10, 64) - r(1, 1))) * r(3, 8) + r(2, 1) * (r(1, 1) - r(2, 3)) * r(3, 8) + r(1, 8);
        assert_eq!(displayed, r(15, 1024));
    }

    #[test]
    fn biased_examples() {
        let zero = r(0, 1);
        assert_eq!(expected_weight_biased(5, 2, &zero).unwrap(), r(1, 2));
        for f in 1..=20u32 {
            for t in 0..=f {
                let want = r(i64::from(f) - 2 * i64::from(t), 2);
                assert_eq!(biased_poly::<Rational>(f, t).unwrap().c0, want);
                assert_eq!(expected_weight_biased(f, t, &zero).unwrap(), want);
            }
        }
        let rho = r(1, 32);
        assert_eq!(expected_weight_biased(4, 1, &rho).unwrap(), expected_weight_biased_from_pmf(4, 1, &rho).unwrap());
        assert!(expected_weight_biased(3, 1, &r(1, 8)).is_err());
    }

    #[test]
    fn biased_poly_matches_direct_evaluation() {
        for f in 1..=10u32 {
            for t in 0..=f {
                let poly = biased_poly::<Rational>(f, t).unwrap();
                for k in 0..8 {
                    let rho = Rational::half_pow(f) * r(k, 8);
                    assert_eq!(poly.eval(&rho), expected_weight_biased(f, t, &rho).unwrap());
                    assert_eq!(poly.eval(&rho), expected_weight_biased_from_pmf(f, t, &rho).unwrap());
                }
            }
        }
    }

    #[test]
    fn boundary_checks() {
        for theta in 7..=40 {
            assert!(boundary_large_deviation_bound(theta) > Rational::zero(), "theta={theta}");
        }
        // the exponential estimate is too weak below theta = 7
        assert!(boundary_large_deviation_bound(6) < Rational::zero());
        for theta in 2..=16 {
            assert!(boundary_binomial_bound(theta) > Rational::zero(), "theta={theta}");
        }
    }

    #[test]
    fn phase_examples() {
        assert_eq!(phase_region(2, 1).unwrap(), PhaseRegion::ClusteringProved);
        assert_eq!(phase_region(7, 2).unwrap(), PhaseRegion::CoexistenceProvedUniform);
        assert_eq!(phase_region(5, 2).unwrap(), PhaseRegion::CoexistenceProvedBiasedOnly);
        assert_eq!(phase_region(4, 2).unwrap(), PhaseRegion::Open);
        assert_eq!(phase_region(3, 1).unwrap(), PhaseRegion::CoexistenceProvedUniform);
        assert_eq!(phase_region(2, 2).unwrap(), PhaseRegion::VoterReduction);
        assert!(phase_region(2, 3).is_err());
    }

    #[test]
    fn float_instantiation_agrees() {
        let exact = expected_weight_uniform::<Rational>(9, 2).unwrap().to_f64();
        let float = expected_weight_uniform::<f64>(9, 2).unwrap();
        assert!((exact - float).abs() < 1e-12);
        let m = threshold_one_margin::<f64>().margin;
        assert!((m - 15.0 / 1024.0).abs() < 1e-12);
    }
}
