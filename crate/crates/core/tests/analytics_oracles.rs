//! Exhaustive cross-checks of the closed forms for `F <= 20`.

use num_traits::Zero;
use vdeffuant::analytics::{
    expected_weight_from_law, expected_weight_uniform, folded_bound, phase_region, weight_law, FoldVariant, PhaseRegion,
};
use vdeffuant::opinion::pile_pmf_uniform;
use vdeffuant::{Rational, Scalar};

/// Eq. of the expectation written with explicit binomials, independent of the library.
fn brute_expectation(f: u32, t: u32) -> Rational {
    let mut total = Rational::zero();
    let mut c = Rational::from_i64(1);
    for j in 0..=f {
        if j > 0 {
            c = c * Rational::from_i64(i64::from(f - j + 1)) / Rational::from_i64(i64::from(j));
        }
        let pj = c.clone() * Rational::half_pow(f);
        let (jf, ff, tf) = (i64::from(j), i64::from(f), i64::from(t));
        // weight averaged over the Bernoulli: j - 2t + 2(1 - j/F)
        let w = if j <= t {
            Rational::from_i64(-jf)
        } else {
            Rational::from_i64(jf - 2 * tf + 2) - Rational::ratio(2 * jf, ff)
        };
        total += w * pj;
    }
    total
}

#[test]
fn expectation_equals_law_summation() {
    for f in 1..=20 {
        for t in 0..=f {
            let e = expected_weight_uniform::<Rational>(f, t).unwrap();
            let law = weight_law::<Rational>(f, t).unwrap();
            assert_eq!(e, expected_weight_from_law(&law), "F={f} theta={t}");
            assert_eq!(e, brute_expectation(f, t), "F={f} theta={t}");
            for j in 0..=f {
                let total = law.atoms(j).iter().fold(Rational::zero(), |a, (_, q)| a + q);
                assert_eq!(total, Rational::from_i64(1));
            }
        }
    }
}

#[test]
fn folds_are_ordered_lower_bounds() {
    for f in 1..=20 {
        for t in 0..=f {
            let e = expected_weight_uniform::<Rational>(f, t).unwrap();
            let sharp = folded_bound::<Rational>(f, t, FoldVariant::Sharp).unwrap();
            let weak = folded_bound::<Rational>(f, t, FoldVariant::Weak).unwrap();
            assert!(weak <= sharp, "F={f} theta={t}");
            assert!(sharp <= e, "F={f} theta={t}");
            if f % 2 == 1 {
                assert_eq!(sharp, e, "F={f} theta={t}");
            }
        }
    }
}

#[test]
fn weak_fold_terms_are_nonnegative_when_f_at_least_four_theta() {
    for t in 1..=5u32 {
        for f in (4 * t)..=20 {
            let weak = folded_bound::<Rational>(f, t, FoldVariant::Weak).unwrap();
            assert!(weak > Rational::zero(), "F={f} theta={t}");
        }
    }
}

#[test]
fn expectation_positive_in_the_uniform_coexistence_region() {
    for t in 1..=20u32 {
        for f in (4 * t).saturating_sub(1).max(t + 1)..=20 {
            let e = expected_weight_uniform::<Rational>(f, t).unwrap();
            if (f, t) == (3, 1) {
                assert!(e.is_zero());
            } else {
                assert!(e > Rational::zero(), "F={f} theta={t}: {e}");
            }
        }
    }
}

#[test]
fn pmf_is_symmetric() {
    for f in 1..=20 {
        for j in 0..=f {
            assert_eq!(pile_pmf_uniform::<Rational>(f, j).unwrap(), pile_pmf_uniform::<Rational>(f, f - j).unwrap());
        }
    }
}

#[test]
fn phase_grid_labels() {
    // proved clustering exactly on the line F = theta + 1
    for f in 2..=7u32 {
        for t in 1..f {
            let region = phase_region(f, t).unwrap();
            let want = if f == t + 1 {
                PhaseRegion::ClusteringProved
            } else if f + 1 >= 4 * t {
                PhaseRegion::CoexistenceProvedUniform
            } else if f > 2 * t {
                PhaseRegion::CoexistenceProvedBiasedOnly
            } else {
                PhaseRegion::Open
            };
            assert_eq!(region, want, "F={f} theta={t}");
        }
    }
}
