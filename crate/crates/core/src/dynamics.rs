//! One discrete time step of the monitored evolution.
//!
//! ```text
//! U(t + dt) = N[ exp(sum_{k odd} M_k) N[ exp(sum_{k even} M_k) exp(i dt H) U(t) ] ]
//! ```
//!
//! Bond `k` (0-based) couples sites `k` and `(k + 1) mod L`; "even" bonds are
//! `0, 2, ..., L - 2` and "odd" bonds `1, 3, ..., L - 1`. Bonds of one parity
//! have disjoint supports, so their Kraus factors commute and each one is the
//! rank-1 update `I + (e^{A_k} - 1) v_k v_k^T`, with `v_k` the real unit
//! vector carrying `cos(theta/4)` on site `k` and `sin(theta/4)` on `k + 1`.

use std::f64::consts::PI;
use std::sync::Arc;

use faer::linalg::matmul::matmul;
use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{Accum, Mat, MatMut, Par, Side};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::state::{GaussianState, QrMethod};
use crate::C64;

/// RNG for one purpose of one trajectory. Streams are independent ChaCha
/// streams of the same key, so results do not depend on which worker runs
/// the trajectory.
pub fn stream_rng(master_seed: u64, trajectory_id: u64, purpose: StreamPurpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(2 * trajectory_id + purpose as u64);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamPurpose {
    InitialState = 0,
    Measurement = 1,
}

/// Gaussian measurement-record increments `dxi = sqrt(gamma dt) z`,
/// `z ~ N(0, 1)`, drawn one per bond per layer in the order the layers are
/// applied: for every step, even bonds ascending, then odd bonds ascending.
#[derive(Clone, Debug)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    master_seed: u64,
    trajectory_id: u64,
    scale: f64,
    draws: u64,
}

impl NoiseStream {
    pub fn new(master_seed: u64, trajectory_id: u64, params: &ModelParams) -> Self {
        Self {
            rng: stream_rng(master_seed, trajectory_id, StreamPurpose::Measurement),
            master_seed,
            trajectory_id,
            scale: (params.gamma * params.dt).sqrt(),
            draws: 0,
        }
    }

    pub fn next_increment(&mut self) -> f64 {
        self.draws += 1;
        let z: f64 = StandardNormal.sample(&mut self.rng);
        self.scale * z
    }

    /// Number of increments consumed so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn trajectory_id(&self) -> u64 {
        self.trajectory_id
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    /// Bonds of this parity on a chain of `sites` sites.
    pub fn bonds(self, sites: usize) -> impl Iterator<Item = usize> {
        let start = match self {
            Parity::Even => 0,
            Parity::Odd => 1,
        };
        (start..sites).step_by(2)
    }
}

/// The single-particle hopping factor `exp(i dt H)`, `H_ij = J(d_{i,j+1} +
/// d_{i,j-1})` on a ring.
#[derive(Clone)]
pub struct Propagator {
    sites: usize,
    kind: PropagatorKind,
}

#[derive(Clone)]
enum PropagatorKind {
    Identity,
    /// Diagonal in momentum space; `phases[n] = exp(i dt eps(k_n)) / L`.
    Fourier {
        phases: Vec<C64>,
        forward: Arc<dyn Fft<f64>>,
        inverse: Arc<dyn Fft<f64>>,
    },
    Dense(Mat<C64>),
}

impl std::fmt::Debug for Propagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.kind {
            PropagatorKind::Identity => "identity",
            PropagatorKind::Fourier { .. } => "fourier",
            PropagatorKind::Dense(_) => "dense",
        };
        f.debug_struct("Propagator")
            .field("sites", &self.sites)
            .field("kind", &kind)
            .finish()
    }
}

impl Propagator {
    /// Propagator for `params`: identity in measurement-only mode or at
    /// `J = 0`, FFT-based otherwise.
    pub fn for_params(params: &ModelParams) -> Self {
        if params.measurement_only || params.hopping == 0.0 {
            Self::identity(params.sites)
        } else {
            Self::fourier(params.sites, params.hopping, params.dt)
        }
    }

    pub fn identity(sites: usize) -> Self {
        Self {
            sites,
            kind: PropagatorKind::Identity,
        }
    }

    /// Nearest-neighbour hopping with dispersion `2 J cos k`.
    pub fn fourier(sites: usize, hopping: f64, dt: f64) -> Self {
        Self::from_dispersion(sites, dt, |k| 2.0 * hopping * k.cos())
    }

    /// Any translation-invariant single-particle Hamiltonian with
    /// dispersion `eps(k)`, `k_n = 2 pi n / L`.
    pub fn from_dispersion(sites: usize, dt: f64, dispersion: impl Fn(f64) -> f64) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(sites);
        let inverse = planner.plan_fft_inverse(sites);
        let norm = 1.0 / sites as f64;
        let phases = (0..sites)
            .map(|n| {
                let k = 2.0 * PI * n as f64 / sites as f64;
                C64::from_polar(norm, dt * dispersion(k))
            })
            .collect();
        Self {
            sites,
            kind: PropagatorKind::Fourier {
                phases,
                forward,
                inverse,
            },
        }
    }

    /// Dense `exp(i dt H)` from the eigendecomposition of the real-space
    /// hopping matrix.
    pub fn dense_hopping(sites: usize, hopping: f64, dt: f64) -> Result<Self> {
        let h = hopping_matrix(sites, hopping);
        Ok(Self {
            sites,
            kind: PropagatorKind::Dense(exp_i_hermitian(&h, dt)?),
        })
    }

    /// Wraps an explicit `L x L` unitary.
    pub fn dense(matrix: Mat<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Dimension("propagator must be square".into()));
        }
        Ok(Self {
            sites: matrix.nrows(),
            kind: PropagatorKind::Dense(matrix),
        })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    /// Dense matrix representation.
    pub fn to_matrix(&self) -> Mat<C64> {
        let mut m = Mat::<C64>::identity(self.sites, self.sites);
        self.apply_to_columns(m.as_mut());
        m
    }

    /// Applies the propagator to every column of the state's mode matrix.
    /// Unitary, so orthonormality is preserved without re-normalization.
    pub fn apply(&self, state: &mut GaussianState) -> Result<()> {
        if state.sites() != self.sites {
            return Err(Error::Dimension(format!(
                "propagator built for L = {}, state has L = {}",
                self.sites,
                state.sites()
            )));
        }
        self.apply_to_columns(state.modes_mut_unitary());
        Ok(())
    }

    fn apply_to_columns(&self, mut modes: MatMut<'_, C64>) {
        match &self.kind {
            PropagatorKind::Identity => {}
            PropagatorKind::Fourier {
                phases,
                forward,
                inverse,
            } => {
                let scratch_len = forward
                    .get_inplace_scratch_len()
                    .max(inverse.get_inplace_scratch_len());
                let mut scratch = vec![C64::new(0.0, 0.0); scratch_len];
                let mut buf = vec![C64::new(0.0, 0.0); self.sites];
                for j in 0..modes.ncols() {
                    for (b, x) in buf.iter_mut().zip(modes.as_ref().col(j).iter()) {
                        *b = *x;
                    }
                    forward.process_with_scratch(&mut buf, &mut scratch);
                    for (x, p) in buf.iter_mut().zip(phases) {
                        *x *= p;
                    }
                    inverse.process_with_scratch(&mut buf, &mut scratch);
                    for (x, b) in modes.as_mut().col_mut(j).iter_mut().zip(&buf) {
                        *x = *b;
                    }
                }
            }
            PropagatorKind::Dense(p) => {
                let out = p * modes.as_ref();
                modes.copy_from(&out);
            }
        }
    }
}

/// Real-space hopping matrix `H_ij = J (d_{i,j+1} + d_{i,j-1})` with periodic
/// boundary conditions.
pub fn hopping_matrix(sites: usize, hopping: f64) -> Mat<C64> {
    let mut h = Mat::<C64>::zeros(sites, sites);
    if sites < 2 {
        return h;
    }
    for i in 0..sites {
        let j = (i + 1) % sites;
        h[(i, j)] += C64::new(hopping, 0.0);
        h[(j, i)] += C64::new(hopping, 0.0);
    }
    h
}

/// `exp(i t H)` for Hermitian `H` via its eigendecomposition.
pub(crate) fn exp_i_hermitian(h: &Mat<C64>, t: f64) -> Result<Mat<C64>> {
    let evd = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Consistency(format!("eigendecomposition failed: {e:?}")))?;
    let v = evd.U();
    let s = evd.S();
    let d = h.nrows();
    let mut vp = v.to_owned();
    for j in 0..d {
        let phase = C64::from_polar(1.0, t * s[j].re);
        for x in vp.col_mut(j).iter_mut() {
            *x *= phase;
        }
    }
    let mut out = Mat::<C64>::zeros(d, d);
    matmul(
        out.as_mut(),
        Accum::Replace,
        vp.as_ref(),
        v.adjoint(),
        C64::new(1.0, 0.0),
        Par::Seq,
    );
    Ok(out)
}

/// `<M_k> = sum_n |cos(theta/4) U_{k,n} + sin(theta/4) U_{k+1,n}|^2` for an
/// orthonormal state; bond `k` wraps to site 0 at `k = L - 1`.
pub fn measurement_expectation(state: &GaussianState, bond: usize, theta: f64) -> f64 {
    let (cw, sw) = ((theta / 4.0).cos(), (theta / 4.0).sin());
    bond_expectation(state, bond, cw, sw)
}

fn bond_expectation(state: &GaussianState, bond: usize, cw: f64, sw: f64) -> f64 {
    let u = state.modes();
    let l = state.sites();
    let (a, b) = (bond % l, (bond + 1) % l);
    (0..state.particles())
        .map(|n| (u[(a, n)] * cw + u[(b, n)] * sw).norm_sqr())
        .sum()
}

/// Born expectations `<M_k>` for the listed bonds. Uses the orthonormal
/// formula when possible, otherwise `w S^{-1} w^dag` with the Gram matrix
/// `S = U^dag U`.
fn born_expectations(state: &GaussianState, bonds: &[usize], cw: f64, sw: f64) -> Result<Vec<f64>> {
    if state.is_orthonormal() {
        return Ok(bonds
            .iter()
            .map(|&k| bond_expectation(state, k, cw, sw))
            .collect());
    }
    let u = state.modes();
    let (l, n) = (state.sites(), state.particles());
    let mut gram = Mat::<C64>::zeros(n, n);
    matmul(
        gram.as_mut(),
        Accum::Replace,
        u.adjoint(),
        u,
        C64::new(1.0, 0.0),
        Par::Seq,
    );
    let llt = gram
        .llt(Side::Lower)
        .map_err(|_| Error::Degenerate { min_diag: 0.0 })?;
    let mut w = Mat::from_fn(n, bonds.len(), |m, b| {
        let k = bonds[b];
        (u[(k % l, m)] * cw + u[((k + 1) % l, m)] * sw).conj()
    });
    solve_lower_triangular_in_place(llt.L(), w.as_mut(), Par::Seq);
    Ok((0..bonds.len())
        .map(|b| w.col(b).iter().map(|x| x.norm_sqr()).sum())
        .collect())
}

/// Rank-1 Kraus update `U <- (I + (e^A - 1) v_k v_k^T) U` on bond `k`.
pub fn apply_bond_kraus(state: &mut GaussianState, bond: usize, log_weight: f64, theta: f64) {
    let (cw, sw) = ((theta / 4.0).cos(), (theta / 4.0).sin());
    bond_kraus(state, bond, log_weight.exp_m1(), cw, sw);
}

fn bond_kraus(state: &mut GaussianState, bond: usize, factor: f64, cw: f64, sw: f64) {
    let l = state.sites();
    let (a, b) = (bond % l, (bond + 1) % l);
    let (fa, fb) = (factor * cw, factor * sw);
    let mut u = state.modes_mut();
    for n in 0..u.ncols() {
        let r = u[(a, n)] * cw + u[(b, n)] * sw;
        u[(a, n)] += r * fa;
        u[(b, n)] += r * fb;
    }
}

/// Order in which bonds are measured within one time step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Even bonds, normalize, odd bonds, normalize.
    #[default]
    OddEven,
    /// Bonds `0, 1, ..., L - 1` one at a time, each followed by a
    /// normalization. Comparison mode only.
    Sequential,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOptions {
    pub qr: QrMethod,
    /// Re-orthonormalize after every `m`-th measurement layer. Born
    /// probabilities on skipped layers are evaluated through the Gram
    /// matrix, so the dynamics is the same for every `m`.
    pub renormalize_every: usize,
    pub protocol: Protocol,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            qr: QrMethod::default(),
            renormalize_every: 1,
            protocol: Protocol::OddEven,
        }
    }
}

/// What one measurement layer did: the bonds, their Born expectations at the
/// start of the layer, the noise increments and the resulting `A_k`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub bonds: Vec<usize>,
    pub expectations: Vec<f64>,
    pub increments: Vec<f64>,
    pub log_weights: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub layers: Vec<LayerRecord>,
}

/// Applies the Kraus factors of one set of mutually disjoint bonds, with
/// `A_k = (2 <M_k> - 1) gamma dt + dxi_k` and `<M_k>` taken at the start of
/// the layer, then re-orthonormalizes (or defers it, see
/// [`StepOptions::renormalize_every`]).
pub fn apply_measurement_layer(
    state: &mut GaussianState,
    parity: Parity,
    params: &ModelParams,
    noise: &mut NoiseStream,
    options: &StepOptions,
    record: Option<&mut LayerRecord>,
) -> Result<()> {
    let bonds: Vec<usize> = parity.bonds(params.sites).collect();
    apply_bond_set(state, &bonds, params, noise, options, record)
}

fn apply_bond_set(
    state: &mut GaussianState,
    bonds: &[usize],
    params: &ModelParams,
    noise: &mut NoiseStream,
    options: &StepOptions,
    record: Option<&mut LayerRecord>,
) -> Result<()> {
    let (cw, sw) = params.orbital_weights();
    let drift = params.gamma * params.dt;
    let expectations = born_expectations(state, bonds, cw, sw)?;
    let mut log_weights = Vec::with_capacity(bonds.len());
    let mut increments = Vec::with_capacity(bonds.len());
    for (&k, &m) in bonds.iter().zip(&expectations) {
        let xi = noise.next_increment();
        let a = (2.0 * m - 1.0) * drift + xi;
        bond_kraus(state, k, a.exp_m1(), cw, sw);
        increments.push(xi);
        log_weights.push(a);
    }
    if state.note_unnormalized_layer() >= options.renormalize_every.max(1) {
        state.normalize(options.qr)?;
    }
    if let Some(rec) = record {
        *rec = LayerRecord {
            bonds: bonds.to_vec(),
            expectations,
            increments,
            log_weights,
        };
    }
    Ok(())
}

/// Drives one trajectory: parameters, hopping propagator and step options.
/// Immutable, so it can be shared between workers.
#[derive(Clone, Debug)]
pub struct Stepper {
    params: ModelParams,
    propagator: Propagator,
    options: StepOptions,
}

impl Stepper {
    pub fn new(params: ModelParams) -> Result<Self> {
        Self::with_options(params, StepOptions::default())
    }

    pub fn with_options(params: ModelParams, options: StepOptions) -> Result<Self> {
        params.validate()?;
        let propagator = Propagator::for_params(&params);
        Ok(Self {
            params,
            propagator,
            options,
        })
    }

    /// Replaces the hopping propagator (same `L`).
    pub fn with_propagator(mut self, propagator: Propagator) -> Result<Self> {
        if propagator.sites() != self.params.sites {
            return Err(Error::Dimension("propagator size differs from L".into()));
        }
        self.propagator = propagator;
        Ok(self)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn propagator(&self) -> &Propagator {
        &self.propagator
    }

    pub fn options(&self) -> &StepOptions {
        &self.options
    }

    pub fn noise(&self, master_seed: u64, trajectory_id: u64) -> NoiseStream {
        NoiseStream::new(master_seed, trajectory_id, &self.params)
    }

    /// Number of noise increments consumed per step.
    pub fn draws_per_step(&self) -> u64 {
        self.params.sites as u64
    }

    pub fn step(&self, state: &mut GaussianState, noise: &mut NoiseStream) -> Result<()> {
        self.step_inner(state, noise, None)
    }

    pub fn step_recorded(
        &self,
        state: &mut GaussianState,
        noise: &mut NoiseStream,
        record: &mut StepRecord,
    ) -> Result<()> {
        self.step_inner(state, noise, Some(record))
    }

    fn step_inner(
        &self,
        state: &mut GaussianState,
        noise: &mut NoiseStream,
        mut record: Option<&mut StepRecord>,
    ) -> Result<()> {
        let p = &self.params;
        if state.sites() != p.sites {
            return Err(Error::Dimension(format!(
                "state has L = {}, parameters L = {}",
                state.sites(),
                p.sites
            )));
        }
        if !p.measurement_only {
            self.propagator.apply(state)?;
        }
        let layers: Vec<Vec<usize>> = match self.options.protocol {
            Protocol::OddEven => vec![
                Parity::Even.bonds(p.sites).collect(),
                Parity::Odd.bonds(p.sites).collect(),
            ],
            Protocol::Sequential => (0..p.sites).map(|k| vec![k]).collect(),
        };
        if let Some(rec) = record.as_deref_mut() {
            rec.layers.clear();
        }
        for bonds in &layers {
            let mut layer = LayerRecord::default();
            let sink = record.is_some().then_some(&mut layer);
            let opts = match self.options.protocol {
                Protocol::OddEven => self.options,
                Protocol::Sequential => StepOptions {
                    renormalize_every: 1,
                    ..self.options
                },
            };
            apply_bond_set(state, bonds, p, noise, &opts, sink)?;
            if let Some(rec) = record.as_deref_mut() {
                rec.layers.push(layer);
            }
        }
        state.advance_time(p.dt);
        Ok(())
    }

    pub fn evolve(
        &self,
        state: &mut GaussianState,
        noise: &mut NoiseStream,
        steps: usize,
    ) -> Result<()> {
        for _ in 0..steps {
            self.step(state, noise)?;
        }
        Ok(())
    }
}
