//! Quantities extracted from a correlation matrix.

use std::f64::consts::PI;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{hermitian_eigenvalues, CorrelationMatrix};
use crate::C64;

/// Eigenvalues this close to 0 or 1 count as exactly 0 or 1.
pub const SPECTRUM_CLAMP: f64 = 1e-12;

/// One time sample of a trajectory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub t: f64,
    #[serde(rename = "S_half")]
    pub s_half: f64,
    #[serde(rename = "C2_half")]
    pub c2_half: f64,
    #[serde(rename = "C4_half")]
    pub c4_half: f64,
    #[serde(rename = "Cbar")]
    pub cbar: Vec<f64>,
    #[serde(rename = "Cq")]
    pub cq: Vec<f64>,
    #[serde(rename = "G_AB")]
    pub g_ab: f64,
}

/// Which observables to evaluate. Skipped ones are left at zero (or empty).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservableSelection {
    pub entropy: bool,
    pub cumulants: bool,
    pub correlations: bool,
    pub covariance: bool,
}

impl Default for ObservableSelection {
    fn default() -> Self {
        Self::all()
    }
}

impl ObservableSelection {
    pub fn all() -> Self {
        Self {
            entropy: true,
            cumulants: true,
            correlations: true,
            covariance: true,
        }
    }

    pub fn none() -> Self {
        Self {
            entropy: false,
            cumulants: false,
            correlations: false,
            covariance: false,
        }
    }

    /// Parses names such as `"entropy"`, `"cumulants"`, `"cq"`, `"g_ab"` or
    /// `"all"`.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut sel = Self::none();
        for name in names {
            match name.as_ref().to_ascii_lowercase().as_str() {
                "all" => sel = Self::all(),
                "entropy" | "s" | "s_half" => sel.entropy = true,
                "cumulants" | "c2" | "c4" | "c2_half" | "c4_half" => sel.cumulants = true,
                "correlations" | "cbar" | "cq" => sel.correlations = true,
                "covariance" | "g_ab" | "gab" => sel.covariance = true,
                other => return Err(Error::param(format!("unknown observable '{other}'"))),
            }
        }
        Ok(sel)
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.entropy {
            out.push("entropy");
        }
        if self.cumulants {
            out.push("cumulants");
        }
        if self.correlations {
            out.push("correlations");
        }
        if self.covariance {
            out.push("covariance");
        }
        out
    }
}

/// Sites `0 .. L/2`.
pub fn half_chain(sites: usize) -> Vec<usize> {
    (0..sites / 2).collect()
}

/// Antipodal regions `A = [0, L/4)`, `B = [L/2, 3L/4)`.
pub fn antipodal_regions(sites: usize) -> (Vec<usize>, Vec<usize>) {
    let q = sites / 4;
    ((0..q).collect(), (sites / 2..sites / 2 + q).collect())
}

/// Eigenvalues of the restriction of `G` to `region`, clamped to `[0, 1]`.
pub fn region_spectrum(g: &CorrelationMatrix, region: &[usize]) -> Result<Vec<f64>> {
    if region.is_empty() {
        return Err(Error::param("region must be non-empty"));
    }
    if let Some(&bad) = region.iter().find(|&&i| i >= g.sites()) {
        return Err(Error::param(format!(
            "site {bad} outside chain of length {}",
            g.sites()
        )));
    }
    let sub = CorrelationMatrix::from_matrix(g.submatrix(region))?;
    Ok(hermitian_eigenvalues(sub.as_ref())?
        .into_iter()
        .map(|x| x.clamp(0.0, 1.0))
        .collect())
}

/// `-x ln x - (1 - x) ln(1 - x)` with the endpoint convention.
pub fn binary_entropy(x: f64) -> f64 {
    if x <= SPECTRUM_CLAMP || x >= 1.0 - SPECTRUM_CLAMP {
        return 0.0;
    }
    -x * x.ln() - (1.0 - x) * (-x).ln_1p()
}

pub fn entropy_from_spectrum(spectrum: &[f64]) -> f64 {
    spectrum.iter().map(|&x| binary_entropy(x)).sum()
}

/// Second and fourth cumulants of the region charge.
pub fn cumulants_from_spectrum(spectrum: &[f64]) -> (f64, f64) {
    spectrum.iter().fold((0.0, 0.0), |(c2, c4), &x| {
        let v = x * (1.0 - x);
        (c2 + v, c4 + v * (1.0 - 6.0 * v))
    })
}

/// Von Neumann entanglement entropy of `region` in nats.
pub fn entanglement_entropy(g: &CorrelationMatrix, region: &[usize]) -> Result<f64> {
    Ok(entropy_from_spectrum(&region_spectrum(g, region)?))
}

/// `(C2, C4)` of the particle number in `region`.
pub fn charge_cumulants(g: &CorrelationMatrix, region: &[usize]) -> Result<(f64, f64)> {
    Ok(cumulants_from_spectrum(&region_spectrum(g, region)?))
}

/// Translation-averaged connected density correlation
/// `Cbar(x) = (1/L) sum_i C_{i,i+x}`, `C_ij = d_ij G_ii - |G_ij|^2`.
pub fn pair_correlation(g: &CorrelationMatrix) -> Vec<f64> {
    let l = g.sites();
    let mut cbar = vec![0.0; l];
    for i in 0..l {
        cbar[0] += g.get(i, i).re;
        for (x, c) in cbar.iter_mut().enumerate() {
            *c -= g.get(i, (i + x) % l).norm_sqr();
        }
    }
    let inv = 1.0 / l as f64;
    cbar.iter_mut().for_each(|c| *c *= inv);
    cbar
}

/// `C(q_n) = sum_x e^{-i q_n x} Cbar(x)` at `q_n = 2 pi n / L`; the
/// imaginary part vanishes for even `Cbar` and is dropped.
pub fn momentum_correlation(cbar: &[f64]) -> Vec<f64> {
    let l = cbar.len();
    if l == 0 {
        return Vec::new();
    }
    let mut buf: Vec<C64> = cbar.iter().map(|&x| C64::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(l).process(&mut buf);
    buf.into_iter().map(|z| z.re).collect()
}

/// `q_n = 2 pi n / L`.
pub fn momentum(n: usize, sites: usize) -> f64 {
    2.0 * PI * n as f64 / sites as f64
}

/// Lattice momentum `2 sin(q/2)`.
pub fn q_tilde(q: f64) -> f64 {
    2.0 * (q / 2.0).sin()
}

/// `G_AB = sum_{i in A, j in B} |G_ij|^2 = <N_A><N_B> - <N_A N_B>`.
pub fn number_covariance(g: &CorrelationMatrix, a: &[usize], b: &[usize]) -> Result<f64> {
    if let Some(&i) = a.iter().find(|i| b.contains(i)) {
        return Err(Error::param(format!("regions overlap at site {i}")));
    }
    if let Some(&bad) = a.iter().chain(b).find(|&&i| i >= g.sites()) {
        return Err(Error::param(format!(
            "site {bad} outside chain of length {}",
            g.sites()
        )));
    }
    Ok(a.iter()
        .map(|&i| b.iter().map(|&j| g.get(i, j).norm_sqr()).sum::<f64>())
        .sum())
}

/// All selected observables of one sample at time `t`, with the half chain
/// as region and the antipodal quarter-chains for `G_AB`.
pub fn measure(
    g: &CorrelationMatrix,
    t: f64,
    selection: &ObservableSelection,
) -> Result<ObservableRecord> {
    let l = g.sites();
    let mut rec = ObservableRecord {
        t,
        ..Default::default()
    };
    if selection.entropy || selection.cumulants {
        let spectrum = region_spectrum(g, &half_chain(l))?;
        if selection.entropy {
            rec.s_half = entropy_from_spectrum(&spectrum);
        }
        if selection.cumulants {
            (rec.c2_half, rec.c4_half) = cumulants_from_spectrum(&spectrum);
        }
    }
    if selection.correlations {
        rec.cbar = pair_correlation(g);
        rec.cq = momentum_correlation(&rec.cbar);
    }
    if selection.covariance {
        let (a, b) = antipodal_regions(l);
        if !a.is_empty() {
            rec.g_ab = number_covariance(g, &a, &b)?;
        }
    }
    Ok(rec)
}
