//! Analytical predictions of the semiclassical (Gaussian) field theory.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

pub mod special;
mod wiener_hopf;

pub use special::{c_alpha_expansion, c_alpha_series, c_alpha_zero, zeta};
pub use wiener_hopf::{ln_g, wiener_hopf_c0_quadrature};

/// Levy exponent at maximal frustration.
pub const ALPHA_SUPERDIFFUSIVE: f64 = 1.5;
/// Levy exponent of the diffusive branch.
pub const ALPHA_DIFFUSIVE: f64 = 2.0;

/// Tail tolerance of the direct polylogarithm series in [`c_alpha_r`].
pub const C_ALPHA_TAIL_TOL: f64 = 1e-8;
/// Beyond this many terms [`c_alpha_r`] switches to the expansion around the
/// unit circle.
const C_ALPHA_MAX_TERMS: u64 = 20_000_000;

/// Middle-branch coefficient `2^{-2/3} 3^{-1/2}` of `C(q)`.
pub fn cq_superdiffusive_coefficient() -> f64 {
    2f64.powf(-2.0 / 3.0) / 3f64.sqrt()
}

/// `delta = theta - pi`.
pub fn delta(theta: f64) -> f64 {
    theta - PI
}

/// `gamma_k = gamma (1 + sin(theta/2) cos k)`.
pub fn gamma_k(gamma: f64, theta: f64, k: f64) -> f64 {
    (gamma * (1.0 + (theta / 2.0).sin() * k.cos())).max(0.0)
}

/// `|cos(theta/2)|` as `|sin((pi - theta)/2)|`, exactly zero at `theta = pi`.
fn half_angle_cos(theta: f64) -> f64 {
    ((PI - theta) / 2.0).sin().abs()
}

fn positive_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 {
        Ok(())
    } else if gamma == 0.0 {
        Err(Error::Divergent(
            "gamma = 0: diffusion coefficient diverges".into(),
        ))
    } else {
        Err(Error::param(format!("gamma must be positive, got {gamma}")))
    }
}

/// `D = (4 J^2 / gamma) / (1 + |cos(theta/2)|) + (gamma / 4)(1 - |cos(theta/2)|)`.
pub fn diffusion_coefficient(hopping: f64, gamma: f64, theta: f64) -> Result<f64> {
    positive_gamma(gamma)?;
    let c = half_angle_cos(theta);
    Ok(4.0 * hopping * hopping / gamma / (1.0 + c) + gamma / 4.0 * (1.0 - c))
}

/// `l0 = sqrt(D / gamma)`.
pub fn mean_free_path(hopping: f64, gamma: f64, theta: f64) -> Result<f64> {
    Ok((diffusion_coefficient(hopping, gamma, theta)? / gamma).sqrt())
}

/// `B(omega) = [(gamma - i omega)^2 - gamma^2 sin^2(theta/2)]^{-1/2}`,
/// principal branch.
pub fn diffuson_kernel(gamma: f64, theta: f64, omega: f64) -> Result<C64> {
    let s = (theta / 2.0).sin();
    let z = C64::new(gamma, -omega).powi(2) - gamma * gamma * s * s;
    if z.norm() == 0.0 {
        return Err(Error::Divergent(format!(
            "B(omega) diverges at theta = {theta}, omega = {omega}"
        )));
    }
    Ok(z.sqrt().inv())
}

/// Closed form `c0 = 1 / sin(pi / alpha)`.
pub fn wiener_hopf_c0(alpha: f64) -> Result<f64> {
    if alpha == 1.0 {
        return Err(Error::Divergent("c0 diverges at alpha = 1".into()));
    }
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(Error::param(format!(
            "alpha must lie in (1, 2], got {alpha}"
        )));
    }
    Ok(1.0 / (PI / alpha).sin())
}

/// `c_alpha(r) = 4r / ((2 pi r)^{2/alpha} sin(pi/alpha)) [zeta(2/alpha) - Re Li_{2/alpha}(e^{2 pi i r})]`.
pub fn c_alpha_r(alpha: f64, r: f64) -> Result<f64> {
    match c_alpha_series_if_short(alpha, r)? {
        Some(v) => Ok(v),
        None => c_alpha_expansion(alpha, r),
    }
}

fn c_alpha_series_if_short(alpha: f64, r: f64) -> Result<Option<f64>> {
    // validates the domain
    c_alpha_expansion(alpha, r)?;
    let s = 2.0 / alpha;
    let terms = (1.0 / (C_ALPHA_TAIL_TOL * (PI * r).sin()))
        .powf(1.0 / s)
        .ceil();
    if terms > C_ALPHA_MAX_TERMS as f64 {
        return Ok(None);
    }
    Ok(Some(c_alpha_series(alpha, r, C_ALPHA_TAIL_TOL)?.0))
}

/// Prefactor `g0` of the density correlations: `l0^{2/3} / 2^{5/3}` at
/// `alpha = 3/2`, `l0 / (2 sqrt|cos(theta/2)|)` at `alpha = 2`.
pub fn g0(hopping: f64, gamma: f64, theta: f64, alpha: f64) -> Result<f64> {
    let l0 = mean_free_path(hopping, gamma, theta)?;
    if alpha == ALPHA_SUPERDIFFUSIVE {
        Ok(l0.powf(2.0 / 3.0) / 2f64.powf(5.0 / 3.0))
    } else if alpha == ALPHA_DIFFUSIVE {
        let c = half_angle_cos(theta);
        if c == 0.0 {
            return Err(Error::Divergent(
                "diffusive g0 diverges at theta = pi".into(),
            ));
        }
        Ok(l0 / (2.0 * c.sqrt()))
    } else {
        Err(Error::param(format!(
            "g0 is known for alpha = 3/2 and alpha = 2 only, got {alpha}"
        )))
    }
}

/// `C_A^(2) ~ g0 (r L)^{2/alpha - 1} c_alpha(r)` for a region of `r L` sites.
/// At `alpha = 2` the logarithmic divergence of `c_alpha` is reported as an
/// error.
pub fn second_cumulant_theory(
    hopping: f64,
    gamma: f64,
    theta: f64,
    sites: f64,
    r: f64,
    alpha: f64,
) -> Result<f64> {
    let g = g0(hopping, gamma, theta, alpha)?;
    let c = c_alpha_r(alpha, r)?;
    Ok(g * (r * sites).powf(2.0 / alpha - 1.0) * c)
}

/// `S ~ (pi^2 / 3) C^(2)`.
pub fn entropy_from_cumulant(c2: f64) -> f64 {
    PI * PI / 3.0 * c2
}

/// Piecewise `C(q)`:
/// `(2|delta|)^{-1/2} q l0` for `q l0 < |delta|^{3/2}`,
/// `2^{-2/3} 3^{-1/2} (q l0)^{2/3}` up to `q l0 = 1`, constant beyond
/// (continuous at `q l0 = 1`).
pub fn cq_theory(hopping: f64, gamma: f64, theta: f64, q: f64) -> Result<f64> {
    if q < 0.0 {
        return Err(Error::param(format!("q must be >= 0, got {q}")));
    }
    let l0 = mean_free_path(hopping, gamma, theta)?;
    let d = delta(theta).abs();
    let x = (q * l0).min(1.0);
    let linear_edge = d.powf(1.5);
    if d > 0.0 && x < linear_edge {
        Ok(x / (2.0 * d).sqrt())
    } else {
        Ok(cq_superdiffusive_coefficient() * x.powf(2.0 / 3.0))
    }
}

/// Smooth interpolation of [`cq_theory`] for plotting: soft minimum of the
/// linear and `q^{2/3}` branches, saturating at `q l0 = 1`.
pub fn cq_theory_smooth(hopping: f64, gamma: f64, theta: f64, q: f64) -> Result<f64> {
    if q < 0.0 {
        return Err(Error::param(format!("q must be >= 0, got {q}")));
    }
    let l0 = mean_free_path(hopping, gamma, theta)?;
    let d = delta(theta).abs();
    let x = q * l0;
    let mid = cq_superdiffusive_coefficient() * x.powf(2.0 / 3.0);
    let mid_const = cq_superdiffusive_coefficient();
    let inv = |v: f64| if v > 0.0 { v.powi(-4) } else { f64::INFINITY };
    let mut acc = inv(mid) + inv(mid_const);
    if d > 0.0 {
        acc += inv(x / (2.0 * d).sqrt());
    }
    Ok(if acc.is_infinite() {
        0.0
    } else {
        acc.powf(-0.25)
    })
}

/// Effective coupling, crossover length and localization length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    /// `g = (l0 / sqrt 2) |delta|^{-1/2}`.
    pub coupling: f64,
    /// `l* = l0 |delta|^{-3/2}`.
    pub ell_star: f64,
    /// `l_loc = l* exp(4 pi g)`, unit prefactor. Infinite at `delta = 0`.
    pub ell_loc: f64,
}

pub fn coupling_and_loc_length(hopping: f64, gamma: f64, theta: f64) -> Result<Localization> {
    let l0 = mean_free_path(hopping, gamma, theta)?;
    let d = delta(theta).abs();
    if d == 0.0 {
        return Ok(Localization {
            coupling: f64::INFINITY,
            ell_star: f64::INFINITY,
            ell_loc: f64::INFINITY,
        });
    }
    let coupling = l0 / 2f64.sqrt() / d.sqrt();
    let ell_star = l0 * d.powf(-1.5);
    Ok(Localization {
        coupling,
        ell_star,
        ell_loc: ell_star * (4.0 * PI * coupling).exp(),
    })
}

/// One named theoretical value. `value` is `None` where the formula
/// diverges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryPrediction {
    pub quantity: String,
    pub formula: String,
    pub value: Option<f64>,
}

impl TheoryPrediction {
    fn from_result(quantity: &str, formula: &str, value: Result<f64>) -> Result<Self> {
        let value = match value {
            Ok(v) if v.is_finite() => Some(v),
            Ok(_) | Err(Error::Divergent(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            quantity: quantity.into(),
            formula: formula.into(),
            value,
        })
    }

    pub fn is_divergent(&self) -> bool {
        self.value.is_none()
    }
}

/// Scalar predictions for one parameter point.
pub fn summary(hopping: f64, gamma: f64, theta: f64) -> Result<Vec<TheoryPrediction>> {
    let alpha = ALPHA_SUPERDIFFUSIVE;
    let loc = coupling_and_loc_length(hopping, gamma, theta);
    let mut out = vec![
        TheoryPrediction::from_result(
            "gamma_k_min",
            "gamma (1 - sin(theta/2))",
            Ok(gamma_k(gamma, theta, PI)),
        )?,
        TheoryPrediction::from_result(
            "D",
            "(4J^2/gamma)/(1+|cos(theta/2)|) + (gamma/4)(1-|cos(theta/2)|)",
            diffusion_coefficient(hopping, gamma, theta),
        )?,
        TheoryPrediction::from_result(
            "ell0",
            "sqrt(D/gamma)",
            mean_free_path(hopping, gamma, theta),
        )?,
        TheoryPrediction::from_result(
            "B(0)",
            "|(gamma^2 cos^2(theta/2))^{-1/2}|",
            diffuson_kernel(gamma, theta, 0.0).map(|b| b.norm()),
        )?,
        TheoryPrediction::from_result("c0", "1/sin(pi/alpha), alpha = 3/2", wiener_hopf_c0(alpha))?,
        TheoryPrediction::from_result(
            "c_alpha(0+)",
            "(4/(pi alpha)) Gamma(-2/alpha)",
            c_alpha_zero(alpha),
        )?,
        TheoryPrediction::from_result(
            "c_alpha(1/2)",
            "polylog form at r = 1/2",
            c_alpha_r(alpha, 0.5),
        )?,
        TheoryPrediction::from_result(
            "g0",
            "ell0^{2/3}/2^{5/3}",
            g0(hopping, gamma, theta, alpha),
        )?,
    ];
    for (name, formula, pick) in [
        ("g", "(ell0/sqrt 2)|delta|^{-1/2}", 0),
        ("ell_star", "ell0 |delta|^{-3/2}", 1),
        ("ell_loc", "ell_star exp(4 pi g)", 2),
    ] {
        let v = loc
            .as_ref()
            .map(|l| [l.coupling, l.ell_star, l.ell_loc][pick])
            .map_err(|e| Error::Divergent(e.to_string()));
        out.push(TheoryPrediction::from_result(name, formula, v)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_rate() {
        assert_eq!(gamma_k(2.0, PI, PI), 0.0);
        assert_eq!(gamma_k(1.0, 0.0, 0.3), 1.0);
        assert_eq!(gamma_k(1.0, PI, 0.0), 2.0);
    }

    #[test]
    fn diffusion_values() {
        assert_eq!(diffusion_coefficient(1.0, 1.0, 0.0).unwrap(), 2.0);
        assert!((diffusion_coefficient(0.0, 1.0, PI).unwrap() - 0.25).abs() < 1e-16);
        assert!((diffusion_coefficient(1.0, 2.0, PI).unwrap() - 2.5).abs() < 1e-15);
        assert!(matches!(
            diffusion_coefficient(1.0, 0.0, PI),
            Err(Error::Divergent(_))
        ));
        assert!((mean_free_path(0.0, 1.0, PI).unwrap() - 0.5).abs() < 1e-15);
        assert!((mean_free_path(1.0, 2.0, PI).unwrap() - 1.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn kernel_limits() {
        assert!((diffuson_kernel(1.0, 0.0, 0.0).unwrap() - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((diffuson_kernel(1.0, PI / 2.0, 0.0).unwrap().norm() - 2f64.sqrt()).abs() < 1e-14);
        assert!(matches!(
            diffuson_kernel(1.0, PI, 0.0),
            Err(Error::Divergent(_))
        ));
        for &w in &[1e-3, 1e-5, -1e-5] {
            let b = diffuson_kernel(1.0, PI, w).unwrap();
            let ratio = b.norm() * (2.0 * w.abs()).sqrt();
            assert!((ratio - 1.0).abs() < 2.0 * w.abs(), "omega = {w}: {ratio}");
        }
    }

    #[test]
    fn c0_values() {
        assert!((wiener_hopf_c0(2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((wiener_hopf_c0(1.5).unwrap() - 2.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!(matches!(wiener_hopf_c0(1.0), Err(Error::Divergent(_))));
    }

    #[test]
    fn second_cumulant_homogeneity() {
        let a = second_cumulant_theory(1.0, 4.0, PI, 64.0, 0.5, 1.5).unwrap();
        let b = second_cumulant_theory(1.0, 4.0, PI, 128.0, 0.5, 1.5).unwrap();
        assert!((b / a - 2f64.powf(1.0 / 3.0)).abs() < 1e-12);
        assert!(matches!(
            second_cumulant_theory(1.0, 4.0, 3.0, 64.0, 0.5, 2.0),
            Err(Error::Divergent(_))
        ));
    }

    #[test]
    fn structure_factor_branches() {
        let l0 = mean_free_path(1.0, 4.0, PI).unwrap();
        let coeff = cq_superdiffusive_coefficient() * l0.powf(2.0 / 3.0);
        for &q in &[0.01, 0.1, 0.5, 1.0] {
            let c = cq_theory(1.0, 4.0, PI, q).unwrap();
            assert!((c / q.powf(2.0 / 3.0) - coeff).abs() < 1e-12);
        }
        let sat = cq_theory(1.0, 4.0, PI, 1.0 / l0).unwrap();
        assert_eq!(cq_theory(1.0, 4.0, PI, 3.0 / l0).unwrap(), sat);
        let theta = PI - 0.04;
        let l0 = mean_free_path(1.0, 4.0, theta).unwrap();
        let q = 1e-4 / l0;
        let slope = cq_theory(1.0, 4.0, theta, q).unwrap() / q;
        assert!((slope - l0 / (2.0 * 0.04f64).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn smooth_interpolation_tracks_branches() {
        let theta = PI - 0.01;
        let l0 = mean_free_path(1.0, 4.0, theta).unwrap();
        for &x in &[1e-6, 0.02, 5.0] {
            let raw = cq_theory(1.0, 4.0, theta, x / l0).unwrap();
            let smooth = cq_theory_smooth(1.0, 4.0, theta, x / l0).unwrap();
            assert!(
                (smooth / raw - 1.0).abs() < 0.2,
                "x = {x}: {smooth} vs {raw}"
            );
        }
    }

    #[test]
    fn localization_length() {
        let at_pi = coupling_and_loc_length(1.0, 4.0, PI).unwrap();
        assert!(at_pi.ell_loc.is_infinite());
        let mut prev = f64::INFINITY;
        for i in 1..=50 {
            let d = 0.01 * i as f64;
            let l = coupling_and_loc_length(1.0, 4.0, PI - d).unwrap().ell_loc;
            assert!(l < prev);
            prev = l;
        }
    }

    #[test]
    fn summary_marks_divergences() {
        let rows = summary(1.0, 4.0, PI).unwrap();
        let get = |n: &str| rows.iter().find(|r| r.quantity == n).unwrap().clone();
        assert!(get("B(0)").is_divergent());
        assert!(get("ell_loc").is_divergent());
        assert!((get("c0").value.unwrap() - 2.0 / 3f64.sqrt()).abs() < 1e-15);
    }
}
