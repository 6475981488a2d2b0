//! Exact many-body simulation in the fixed-`N` Fock sector.
//!
//! Basis states are `N`-subsets of the sites stored as bit masks, ordered by
//! increasing mask value. The state of a subset `s_1 < ... < s_N` is
//! `c^dag_{s_1} ... c^dag_{s_N} |0>` (Jordan-Wigner order by ascending site),
//! so `c_j` acting on it picks up `(-1)^{#occupied sites below j}`.
//!
//! The oracle runs the same discrete protocol as [`crate::dynamics`]:
//! `exp(i dt H_MB)` with `H_MB = sum_ij H_ij c_i^dag c_j`, then the Kraus
//! factors `1 + (e^{A_k} - 1) M_k` of each layer, where `M_k = d_k^dag d_k`
//! is the many-body projector of the measured orbital.

use std::collections::HashMap;
use std::sync::Arc;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    exp_i_hermitian, hopping_matrix, stream_rng, StepOptions, StepRecord, Stepper, StreamPurpose,
};
use crate::error::{Error, Result};
use crate::observables::{charge_cumulants, entanglement_entropy, half_chain};
use crate::params::ModelParams;
use crate::state::{hermitian_eigenvalues, CorrelationMatrix, GaussianState};
use crate::C64;

/// Largest sector dimension accepted.
pub const FOCK_DIMENSION_CAP: usize = 20_000;

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// `(-1)^{number of set bits of mask strictly below site}`.
fn sign_below(mask: u64, site: usize) -> f64 {
    if (mask & ((1u64 << site) - 1)).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Determinant by Gaussian elimination with partial pivoting; exactly zero
/// for exactly singular input.
fn determinant(mut m: Mat<C64>) -> C64 {
    let n = m.nrows();
    let mut det = C64::new(1.0, 0.0);
    for c in 0..n {
        let p = (c..n)
            .max_by(|&a, &b| m[(a, c)].norm().total_cmp(&m[(b, c)].norm()))
            .unwrap_or(c);
        let pivot = m[(p, c)];
        if pivot.norm() == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if p != c {
            for k in 0..n {
                let t = m[(p, k)];
                m[(p, k)] = m[(c, k)];
                m[(c, k)] = t;
            }
            det = -det;
        }
        det *= pivot;
        for r in c + 1..n {
            let f = m[(r, c)] / pivot;
            if f.norm() == 0.0 {
                continue;
            }
            for k in c..n {
                let v = m[(c, k)];
                m[(r, k)] -= f * v;
            }
        }
    }
    det
}

/// The `N`-particle sector of `L` sites.
#[derive(Debug)]
pub struct FockBasis {
    sites: usize,
    particles: usize,
    states: Vec<u64>,
    index: HashMap<u64, usize>,
}

impl FockBasis {
    pub fn new(sites: usize, particles: usize) -> Result<Self> {
        if sites == 0 || sites > 63 || particles > sites {
            return Err(Error::param(format!(
                "invalid sector L = {sites}, N = {particles}"
            )));
        }
        let dim = binomial(sites, particles);
        if dim > FOCK_DIMENSION_CAP {
            return Err(Error::Dimension(format!(
                "Fock dimension C({sites}, {particles}) = {dim} exceeds cap {FOCK_DIMENSION_CAP}"
            )));
        }
        let states: Vec<u64> = (0u64..1 << sites)
            .filter(|m| m.count_ones() as usize == particles)
            .collect();
        let index = states.iter().enumerate().map(|(i, &m)| (m, i)).collect();
        Ok(Self {
            sites,
            particles,
            states,
            index,
        })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, i: usize) -> u64 {
        self.states[i]
    }

    pub fn index_of(&self, mask: u64) -> Option<usize> {
        self.index.get(&mask).copied()
    }

    /// Sparse lift of a one-body operator `sum_ij h_ij c_i^dag c_j`, as
    /// `(row, column, value)` triplets.
    pub fn lift_one_body(&self, h: &Mat<C64>) -> Vec<(usize, usize, C64)> {
        let mut out = Vec::new();
        let zero = C64::new(0.0, 0.0);
        for (col, &mask) in self.states.iter().enumerate() {
            for j in (0..self.sites).filter(|&j| mask >> j & 1 == 1) {
                let removed = mask & !(1u64 << j);
                let sj = sign_below(mask, j);
                for i in 0..self.sites {
                    let v = h[(i, j)];
                    if v == zero || (i != j && removed >> i & 1 == 1) {
                        continue;
                    }
                    let target = removed | (1u64 << i);
                    let sign = sj * sign_below(removed, i);
                    out.push((self.index[&target], col, v * sign));
                }
            }
        }
        out
    }

    /// Dense lift of a one-body operator.
    pub fn lift_one_body_dense(&self, h: &Mat<C64>) -> Mat<C64> {
        let d = self.dim();
        let mut m = Mat::<C64>::zeros(d, d);
        for (r, c, v) in self.lift_one_body(h) {
            m[(r, c)] += v;
        }
        m
    }
}

/// Normalized amplitude vector over a [`FockBasis`].
#[derive(Clone, Debug)]
pub struct FockState {
    basis: Arc<FockBasis>,
    amp: Vec<C64>,
}

impl FockState {
    /// Basis state with the listed sites occupied (set semantics).
    pub fn lift_basis_state(basis: Arc<FockBasis>, occupied: &[usize]) -> Result<Self> {
        let mut mask = 0u64;
        for &s in occupied {
            if s >= basis.sites() {
                return Err(Error::param(format!(
                    "site {s} outside chain of length {}",
                    basis.sites()
                )));
            }
            if mask >> s & 1 == 1 {
                return Err(Error::param(format!("site {s} listed twice")));
            }
            mask |= 1 << s;
        }
        let idx = basis.index_of(mask).ok_or_else(|| {
            Error::Dimension(format!(
                "{} particles outside the N = {} sector",
                occupied.len(),
                basis.particles()
            ))
        })?;
        let mut amp = vec![C64::new(0.0, 0.0); basis.dim()];
        amp[idx] = C64::new(1.0, 0.0);
        Ok(Self { basis, amp })
    }

    /// Slater determinant `prod_n (sum_i U_in c_i^dag) |0>`: the amplitude of
    /// a subset is the determinant of the corresponding rows of `U`.
    pub fn from_gaussian(basis: Arc<FockBasis>, state: &GaussianState) -> Result<Self> {
        if state.sites() != basis.sites() || state.particles() != basis.particles() {
            return Err(Error::Dimension(
                "Gaussian state does not match the Fock sector".into(),
            ));
        }
        let u = state.modes();
        let n = basis.particles();
        let amp = basis
            .states
            .iter()
            .map(|&mask| {
                let rows: Vec<usize> = (0..basis.sites()).filter(|&i| mask >> i & 1 == 1).collect();
                determinant(Mat::from_fn(n, n, |a, b| u[(rows[a], b)]))
            })
            .collect();
        let mut s = Self { basis, amp };
        s.normalize()?;
        Ok(s)
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amp
    }

    pub fn norm(&self) -> f64 {
        self.amp.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Degenerate { min_diag: n });
        }
        let inv = 1.0 / n;
        self.amp.iter_mut().for_each(|a| *a *= inv);
        Ok(())
    }

    fn apply_sparse(&self, op: &[(usize, usize, C64)]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.amp.len()];
        for &(r, c, v) in op {
            out[r] += v * self.amp[c];
        }
        out
    }

    /// `<psi| O |psi> / <psi|psi>` for a sparse operator.
    pub fn expectation(&self, op: &[(usize, usize, C64)]) -> C64 {
        let o = self.apply_sparse(op);
        let num: C64 = self.amp.iter().zip(&o).map(|(a, b)| a.conj() * b).sum();
        num / self.norm().powi(2)
    }

    /// `amp <- P amp` with a dense matrix.
    pub fn apply_dense(&mut self, p: &Mat<C64>) {
        let d = self.amp.len();
        let mut out = vec![C64::new(0.0, 0.0); d];
        for (c, &a) in self.amp.iter().enumerate() {
            if a == C64::new(0.0, 0.0) {
                continue;
            }
            for (r, o) in out.iter_mut().enumerate() {
                *o += p[(r, c)] * a;
            }
        }
        self.amp = out;
    }

    /// `amp <- (1 + (e^A - 1) M) amp`, then normalize.
    pub fn apply_kraus(
        &mut self,
        projector: &[(usize, usize, C64)],
        log_weight: f64,
    ) -> Result<()> {
        let m = self.apply_sparse(projector);
        let f = log_weight.exp_m1();
        for (a, x) in self.amp.iter_mut().zip(&m) {
            *a += x * f;
        }
        self.normalize()
    }

    /// `G_ij = <c_i^dag c_j>`.
    pub fn correlation_matrix(&self) -> Result<CorrelationMatrix> {
        let l = self.basis.sites();
        let mut g = Mat::<C64>::zeros(l, l);
        for (col, &mask) in self.basis.states.iter().enumerate() {
            let a = self.amp[col];
            if a == C64::new(0.0, 0.0) {
                continue;
            }
            for j in (0..l).filter(|&j| mask >> j & 1 == 1) {
                let removed = mask & !(1u64 << j);
                let sj = sign_below(mask, j);
                for i in (0..l).filter(|&i| i == j || removed >> i & 1 == 0) {
                    let target = removed | (1u64 << i);
                    let sign = sj * sign_below(removed, i);
                    g[(i, j)] += self.amp[self.basis.index[&target]].conj() * a * sign;
                }
            }
        }
        let norm2 = self.norm().powi(2);
        for j in 0..l {
            for i in 0..l {
                g[(i, j)] /= norm2;
            }
        }
        CorrelationMatrix::from_matrix(g)
    }

    /// Von Neumann entropy of the reduced density matrix of `region`.
    pub fn reduced_entropy(&self, region: &[usize]) -> Result<f64> {
        let l = self.basis.sites();
        let mut region_mask = 0u64;
        for &s in region {
            if s >= l {
                return Err(Error::param(format!(
                    "site {s} outside chain of length {l}"
                )));
            }
            region_mask |= 1 << s;
        }
        let (mut rows, mut cols) = (HashMap::new(), HashMap::new());
        let mut entries = Vec::with_capacity(self.amp.len());
        for (idx, &mask) in self.basis.states.iter().enumerate() {
            let (ma, mb) = (mask & region_mask, mask & !region_mask);
            // moving the region's operators to the left: one sign per pair
            // (b in B, a in A) with b < a
            let crossings: u32 = (0..l)
                .filter(|&a| ma >> a & 1 == 1)
                .map(|a| (mb & ((1u64 << a) - 1)).count_ones())
                .sum();
            let sign = if crossings.is_multiple_of(2) { 1.0 } else { -1.0 };
            let nr = rows.len();
            let r = *rows.entry(ma).or_insert(nr);
            let nc = cols.len();
            let c = *cols.entry(mb).or_insert(nc);
            entries.push((r, c, self.amp[idx] * sign));
        }
        let mut psi = Mat::<C64>::zeros(rows.len(), cols.len());
        for (r, c, v) in entries {
            psi[(r, c)] = v;
        }
        let rho = &psi * psi.adjoint();
        let norm2 = self.norm().powi(2);
        let eig = hermitian_eigenvalues(rho.as_ref())?;
        Ok(eig
            .into_iter()
            .map(|p| p / norm2)
            .filter(|&p| p > 1e-300)
            .map(|p| -p * p.ln())
            .sum())
    }

    /// Probability distribution of the particle number in `region`.
    pub fn counting_statistics(&self, region: &[usize]) -> Vec<f64> {
        let region_mask = region.iter().fold(0u64, |m, &s| m | 1 << s);
        let mut p = vec![0.0; region.len() + 1];
        let norm2 = self.norm().powi(2);
        for (idx, &mask) in self.basis.states.iter().enumerate() {
            p[(mask & region_mask).count_ones() as usize] += self.amp[idx].norm_sqr() / norm2;
        }
        p
    }

    /// Second and fourth cumulants of the region charge from
    /// [`counting_statistics`](Self::counting_statistics).
    pub fn counting_cumulants(&self, region: &[usize]) -> (f64, f64) {
        let p = self.counting_statistics(region);
        let mean: f64 = p.iter().enumerate().map(|(m, q)| m as f64 * q).sum();
        let moment = |k: i32| -> f64 {
            p.iter()
                .enumerate()
                .map(|(m, q)| (m as f64 - mean).powi(k) * q)
                .sum()
        };
        let (m2, m4) = (moment(2), moment(4));
        (m2, m4 - 3.0 * m2 * m2)
    }

    /// `<N_A><N_B> - <N_A N_B>`.
    pub fn number_covariance(&self, a: &[usize], b: &[usize]) -> f64 {
        let ma = a.iter().fold(0u64, |m, &s| m | 1 << s);
        let mb = b.iter().fold(0u64, |m, &s| m | 1 << s);
        let norm2 = self.norm().powi(2);
        let (mut na, mut nb, mut nab) = (0.0, 0.0, 0.0);
        for (idx, &mask) in self.basis.states.iter().enumerate() {
            let w = self.amp[idx].norm_sqr() / norm2;
            let (x, y) = (
                (mask & ma).count_ones() as f64,
                (mask & mb).count_ones() as f64,
            );
            na += w * x;
            nb += w * y;
            nab += w * x * y;
        }
        na * nb - nab
    }
}

/// Precomputed many-body operators of one parameter set.
#[derive(Debug)]
pub struct FockEngine {
    params: ModelParams,
    basis: Arc<FockBasis>,
    propagator: Option<Mat<C64>>,
    hamiltonian: Vec<(usize, usize, C64)>,
    projectors: Vec<Vec<(usize, usize, C64)>>,
}

impl FockEngine {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let basis = Arc::new(FockBasis::new(params.sites, params.particles)?);
        let h = hopping_matrix(params.sites, params.hopping);
        let hamiltonian = basis.lift_one_body(&h);
        let propagator = if params.measurement_only || params.hopping == 0.0 {
            None
        } else {
            Some(exp_i_hermitian(&basis.lift_one_body_dense(&h), params.dt)?)
        };
        let (cw, sw) = params.orbital_weights();
        let l = params.sites;
        let projectors = (0..l)
            .map(|k| {
                let mut v = Mat::<C64>::zeros(l, l);
                let (a, b) = (k, (k + 1) % l);
                v[(a, a)] = C64::new(cw * cw, 0.0);
                v[(b, b)] = C64::new(sw * sw, 0.0);
                v[(a, b)] = C64::new(cw * sw, 0.0);
                v[(b, a)] = C64::new(cw * sw, 0.0);
                basis.lift_one_body(&v)
            })
            .collect();
        Ok(Self {
            params: params.clone(),
            basis,
            propagator,
            hamiltonian,
            projectors,
        })
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn hamiltonian(&self) -> &[(usize, usize, C64)] {
        &self.hamiltonian
    }

    /// `M_k` for bond `k`.
    pub fn projector(&self, bond: usize) -> &[(usize, usize, C64)] {
        &self.projectors[bond % self.params.sites]
    }

    pub fn apply_hopping(&self, state: &mut FockState) {
        if let Some(p) = &self.propagator {
            state.apply_dense(p);
        }
    }

    pub fn measurement_expectation(&self, state: &FockState, bond: usize) -> f64 {
        state.expectation(self.projector(bond)).re
    }

    pub fn apply_kraus(&self, state: &mut FockState, bond: usize, log_weight: f64) -> Result<()> {
        state.apply_kraus(self.projector(bond), log_weight)
    }

    /// Replays one recorded Gaussian step. Returns the largest
    /// `|A_k - A_k^fock|`, where `A_k^fock` uses `<M_k>` of this state.
    pub fn replay_step(&self, state: &mut FockState, record: &StepRecord) -> Result<f64> {
        if !self.params.measurement_only {
            self.apply_hopping(state);
        }
        let drift = self.params.gamma * self.params.dt;
        let mut shift = 0.0f64;
        for layer in &record.layers {
            let local: Vec<f64> = layer
                .bonds
                .iter()
                .map(|&k| self.measurement_expectation(state, k))
                .collect();
            for (i, &k) in layer.bonds.iter().enumerate() {
                let own = (2.0 * local[i] - 1.0) * drift + layer.increments[i];
                shift = shift.max((own - layer.log_weights[i]).abs());
                self.apply_kraus(state, k, layer.log_weights[i])?;
            }
        }
        Ok(shift)
    }
}

/// Outcome of a lockstep comparison of the Gaussian and Fock engines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    /// `max_t max_ij |G_fock - G_gauss|`.
    pub max_deviation: f64,
    pub steps: usize,
    pub params: ModelParams,
    pub master_seed: u64,
    /// Largest distance of a `G_fock` eigenvalue from `{0, 1}`.
    pub max_gaussianity_error: f64,
    /// Largest `|S_rdm - S(G)|` for the half chain.
    pub max_entropy_deviation: f64,
    /// Largest deviation of the counting-statistics `C2`, `C4` from the
    /// eigenvalue formulas for the half chain.
    pub max_cumulant_deviation: f64,
    /// Largest `|A_k - A_k^fock|`.
    pub max_log_weight_shift: f64,
}

/// Runs both engines in lockstep for `steps` steps from the same random
/// occupation and noise stream (trajectory 0 of `master_seed`).
pub fn oracle_trajectory_compare(
    params: &ModelParams,
    steps: usize,
    master_seed: u64,
) -> Result<OracleReport> {
    oracle_compare_with(params, steps, master_seed, StepOptions::default())
}

pub fn oracle_compare_with(
    params: &ModelParams,
    steps: usize,
    master_seed: u64,
    options: StepOptions,
) -> Result<OracleReport> {
    let engine = FockEngine::new(params)?;
    let stepper = Stepper::with_options(params.clone(), options)?;
    let mut rng = stream_rng(master_seed, 0, StreamPurpose::InitialState);
    let mut gauss = GaussianState::random_occupation_with(params, &mut rng)?;
    let mut fock = FockState::from_gaussian(engine.basis().clone(), &gauss)?;
    let mut noise = stepper.noise(master_seed, 0);
    let region = half_chain(params.sites);
    let mut report = OracleReport {
        max_deviation: 0.0,
        steps,
        params: params.clone(),
        master_seed,
        max_gaussianity_error: 0.0,
        max_entropy_deviation: 0.0,
        max_cumulant_deviation: 0.0,
        max_log_weight_shift: 0.0,
    };
    let mut record = StepRecord::default();
    for step in 0..steps {
        stepper.step_recorded(&mut gauss, &mut noise, &mut record)?;
        let expected = (step as u64 + 1) * stepper.draws_per_step();
        let consumed: usize = record.layers.iter().map(|l| l.increments.len()).sum();
        if noise.draws() != expected || consumed as u64 != stepper.draws_per_step() {
            return Err(Error::NoiseDesync {
                expected,
                found: noise.draws(),
            });
        }
        let shift = engine.replay_step(&mut fock, &record)?;
        report.max_log_weight_shift = report.max_log_weight_shift.max(shift);

        let gg = gauss.correlation_matrix();
        let gf = fock.correlation_matrix()?;
        report.max_deviation = report.max_deviation.max(gg.max_abs_diff(&gf));
        for x in gf.eigenvalues()? {
            report.max_gaussianity_error = report
                .max_gaussianity_error
                .max(x.abs().min((1.0 - x).abs()));
        }
        let s = entanglement_entropy(&gg, &region)?;
        report.max_entropy_deviation = report
            .max_entropy_deviation
            .max((fock.reduced_entropy(&region)? - s).abs());
        let (c2, c4) = charge_cumulants(&gg, &region)?;
        let (f2, f4) = fock.counting_cumulants(&region);
        report.max_cumulant_deviation = report
            .max_cumulant_deviation
            .max((c2 - f2).abs())
            .max((c4 - f4).abs());
    }
    Ok(report)
}
