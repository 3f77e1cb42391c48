//! Paired two-sided t-test with a hand-rolled Student t CDF.

use crate::{Error, Result};

/// Significance level behind the report's star column.
pub const ALPHA: f64 = 0.05;

/// Lanczos approximation (g = 7, 9 terms) of `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularised incomplete beta `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided tail probability `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))
}

/// Paired two-sided t-test over per-fold values; returns the p-value.
///
/// All-zero differences give 1. Differences that are constant up to rounding
/// (standard deviation below `1e-12 * |mean|`) give 0.
pub fn paired_significance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "paired test needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::invalid("paired test needs at least two pairs"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().all(|&x| x == 0.0) {
        return Ok(1.0);
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var.sqrt() <= 1e-12 * mean.abs() {
        return Ok(0.0);
    }
    let t = mean / (var / n as f64).sqrt();
    Ok(student_t_two_sided(t, (n - 1) as f64))
}

pub fn is_significant(p: f64) -> bool {
    p < ALPHA
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    fn reference(t: f64, df: f64) -> f64 {
        2.0 * (1.0 - StudentsT::new(0.0, 1.0, df).unwrap().cdf(t.abs()))
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut fact = 1.0f64;
        for n in 1..20 {
            assert!((ln_gamma(n as f64) - fact.ln()).abs() < 1e-12, "{n}");
            fact *= n as f64;
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn fixture_differences() {
        let b = [0.50, 0.40, 0.60, 0.48, 0.42];
        let a = [0.52, 0.41, 0.63, 0.50, 0.44];
        let p = paired_significance(&a, &b).unwrap();
        // independent value: 0.0031982 from a reference t CDF
        assert!((p - 0.0031982021523353).abs() < 1e-9, "{p}");
        assert!((p - reference(6.324555320336759, 4.0)).abs() < 1e-3);
        assert!(is_significant(p));
    }

    #[test]
    fn tail_probabilities_match_reference_values() {
        for (t, df, want) in [
            (1.3, 7.0, 0.23476783539237717),
            (0.2, 1.0, 0.8743340836219977),
            (25.0, 30.0, 1.2091822381286975e-21),
        ] {
            let got = student_t_two_sided(t, df);
            assert!(((got - want) / want).abs() < 1e-9, "t={t} df={df}: {got} vs {want}");
        }
    }

    #[test]
    fn conventions() {
        assert_eq!(paired_significance(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), 1.0);
        assert_eq!(paired_significance(&[0.4, 0.5, 0.6], &[0.3, 0.4, 0.5]).unwrap(), 0.0);
        assert!(paired_significance(&[0.1], &[0.2]).is_err());
        assert!(paired_significance(&[0.1, 0.2], &[0.2]).is_err());
        assert!(!is_significant(0.05) && is_significant(0.0499));
    }

    proptest! {
        #[test]
        fn agrees_with_statrs(t in -40.0f64..40.0, df in 1u32..60) {
            let got = student_t_two_sided(t, df as f64);
            let want = reference(t, df as f64);
            prop_assert!((got - want).abs() < 1e-10, "{} vs {}", got, want);
        }

        #[test]
        fn symmetric_in_argument_order(
            a in proptest::collection::vec(0.0f64..1.0, 5),
            b in proptest::collection::vec(0.0f64..1.0, 5),
        ) {
            let p = paired_significance(&a, &b).unwrap();
            let q = paired_significance(&b, &a).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!((p - q).abs() < 1e-14);
        }
    }
}
