//! Riemann zeta function and the finite-size cumulant function `c_alpha(r)`.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// `B_2, B_4, ..., B_20`.
const BERNOULLI_EVEN: [f64; 10] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
];

/// Riemann zeta function for real `s != 1`. Euler-Maclaurin summation for
/// `s >= 0`, the functional equation below.
pub fn zeta(s: f64) -> f64 {
    if s == 1.0 {
        return f64::INFINITY;
    }
    if s < 0.0 {
        let t = 1.0 - s;
        return 2f64.powf(s) * PI.powf(s - 1.0) * (PI * s / 2.0).sin() * gamma(t) * zeta(t);
    }
    const N: usize = 16;
    let n = N as f64;
    let mut sum: f64 = (1..N).map(|k| (k as f64).powf(-s)).sum();
    sum += n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s);
    // B_2k / (2k)! * s (s+1) ... (s+2k-2) * N^{-s-2k+1}
    let mut rising = s;
    let mut factorial = 2.0;
    let mut power = n.powf(-s - 1.0);
    for (k, b) in BERNOULLI_EVEN.iter().enumerate() {
        sum += b / factorial * rising * power;
        let k2 = 2.0 * (k as f64 + 1.0);
        rising *= (s + k2 - 1.0) * (s + k2);
        factorial *= (k2 + 1.0) * (k2 + 2.0);
        power /= n * n;
    }
    sum
}

fn check_domain(alpha: f64, r: f64) -> Result<f64> {
    if alpha >= 2.0 {
        return Err(Error::Divergent(format!(
            "c_alpha(r) needs alpha < 2 (zeta pole at 2/alpha = 1), got {alpha}"
        )));
    }
    if !(alpha > 1.0) {
        return Err(Error::param(format!(
            "alpha must lie in (1, 2), got {alpha}"
        )));
    }
    if !(r > 0.0 && r <= 0.5) {
        return Err(Error::param(format!("r must lie in (0, 1/2], got {r}")));
    }
    Ok(2.0 / alpha)
}

fn prefactor(alpha: f64, r: f64) -> f64 {
    4.0 * r / ((2.0 * PI * r).powf(2.0 / alpha) * (PI / alpha).sin())
}

/// `c_alpha(r)` from the direct Dirichlet series
/// `zeta(s) - Re Li_s(e^{2 pi i r}) = sum_n (1 - cos 2 pi n r) / n^s`,
/// `s = 2 / alpha`, truncating `Re Li_s` once the summation-by-parts bound
/// `(N+1)^{-s} / sin(pi r)` on its tail drops below `tail_tol`.
/// Returns the value and the number of terms summed.
pub fn c_alpha_series(alpha: f64, r: f64, tail_tol: f64) -> Result<(f64, u64)> {
    let s = check_domain(alpha, r)?;
    let terms = series_terms(s, r, tail_tol);
    let phi = 2.0 * PI * r;
    let mut re_li = 0.0;
    let mut comp = 0.0;
    for n in 1..=terms {
        let nf = n as f64;
        // Kahan summation keeps the millions of terms at rounding level
        let y = (phi * nf).cos() * nf.powf(-s) - comp;
        let t = re_li + y;
        comp = (t - re_li) - y;
        re_li = t;
    }
    Ok((prefactor(alpha, r) * (zeta(s) - re_li), terms))
}

fn series_terms(s: f64, r: f64, tail_tol: f64) -> u64 {
    let bound = 1.0 / (tail_tol * (PI * r).sin());
    bound.powf(1.0 / s).ceil() as u64
}

/// `c_alpha(r)` from the expansion of the polylogarithm around the unit
/// circle, `Li_s(e^mu) = Gamma(1-s)(-mu)^{s-1} + sum_k zeta(s-k) mu^k / k!`,
/// `mu = 2 pi i r`. Converges geometrically for `r < 1`.
pub fn c_alpha_expansion(alpha: f64, r: f64) -> Result<f64> {
    let s = check_domain(alpha, r)?;
    let x = 2.0 * PI * r;
    let mut bracket = -gamma(1.0 - s) * x.powf(s - 1.0) * (PI * (s - 1.0) / 2.0).cos();
    let mut term_scale = 1.0;
    for k in (2..=160).step_by(2) {
        term_scale *= x * x / ((k - 1) as f64 * k as f64);
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        let term = sign * zeta(s - k as f64) * term_scale;
        bracket -= term;
        if term.abs() < 1e-17 * bracket.abs() {
            break;
        }
    }
    Ok(prefactor(alpha, r) * bracket)
}

/// `lim_{r -> 0} c_alpha(r) = (4 / (pi alpha)) Gamma(-2/alpha)`.
pub fn c_alpha_zero(alpha: f64) -> Result<f64> {
    check_domain(alpha, 0.5)?;
    Ok(4.0 / (PI * alpha) * gamma(-2.0 / alpha))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_known_values() {
        assert!((zeta(2.0) - PI * PI / 6.0).abs() < 1e-14);
        assert!((zeta(4.0) - PI.powi(4) / 90.0).abs() < 1e-14);
        assert!((zeta(0.0) + 0.5).abs() < 1e-14);
        assert!((zeta(-1.0) + 1.0 / 12.0).abs() < 1e-14);
        assert!(zeta(-2.0).abs() < 1e-14);
        assert!((zeta(-3.0) - 1.0 / 120.0).abs() < 1e-14);
        assert!((zeta(1.5) - 2.612_375_348_685_488).abs() < 1e-13);
        assert!((zeta(0.5) + 1.460_354_508_809_586_8).abs() < 1e-13);
    }

    #[test]
    fn zeta_matches_slow_sum_with_tail() {
        // sum_{n < M} n^{-s} + M^{1-s}/(s-1) + M^{-s}/2 + s M^{-s-1}/12
        let s = 4.0 / 3.0;
        let m = 200_000u32;
        let mf = m as f64;
        let head: f64 = (1..m).map(|n| (n as f64).powf(-s)).sum();
        let oracle =
            head + mf.powf(1.0 - s) / (s - 1.0) + 0.5 * mf.powf(-s) + s * mf.powf(-s - 1.0) / 12.0;
        assert!((zeta(s) - oracle).abs() < 1e-12);
    }

    #[test]
    fn expansion_and_series_agree() {
        for &(alpha, r) in &[
            (1.5, 0.5),
            (1.5, 0.25),
            (1.5, 0.1),
            (1.3, 0.37),
            (1.8, 0.45),
        ] {
            let e = c_alpha_expansion(alpha, r).unwrap();
            let (d, _) = c_alpha_series(alpha, r, 1e-9).unwrap();
            assert!((e - d).abs() < 1e-7, "alpha = {alpha}, r = {r}: {e} vs {d}");
        }
    }

    #[test]
    fn small_r_approaches_limit() {
        let lim = c_alpha_zero(1.5).unwrap();
        let near = c_alpha_expansion(1.5, 1e-6).unwrap();
        assert!((lim - near).abs() < 1e-3);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(
            c_alpha_expansion(2.0, 0.5),
            Err(Error::Divergent(_))
        ));
        assert!(c_alpha_expansion(1.5, 0.0).is_err());
        assert!(c_alpha_expansion(1.5, 0.7).is_err());
        assert!(c_alpha_expansion(0.9, 0.3).is_err());
    }
}
