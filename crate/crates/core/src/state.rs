//! Slater-determinant states as orthonormal mode matrices.

use faer::linalg::matmul::matmul;
use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{Accum, Mat, MatMut, MatRef, Par, Side};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::C64;

/// Smallest admissible `|R_ii|` in the re-orthonormalization.
pub const DEGENERACY_THRESHOLD: f64 = 1e-13;

/// Tolerance on `max |U^dag U - I|` for caller-provided mode matrices.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// When the Cholesky factor of the Gram matrix has a diagonal spread above
/// this ratio, a second Cholesky-QR pass is applied.
const CHOLESKY_SECOND_PASS_SPREAD: f64 = 1e2;

/// Below this ratio of smallest to largest Cholesky diagonal the Gram matrix
/// has lost too many digits; Householder QR takes over.
const CHOLESKY_FALLBACK_RATIO: f64 = 1e-6;

/// Algorithm used for the thin QR re-orthonormalization.
///
/// Both variants return the unique factor `Q` whose `R` has a positive real
/// diagonal, so they agree up to rounding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QrMethod {
    /// Blocked Householder QR followed by explicit formation of `Q`.
    Householder,
    /// Gram matrix, Cholesky factor, triangular solve (Cholesky-QR), with a
    /// second pass when the columns are poorly conditioned.
    #[default]
    Cholesky,
}

/// `N` fermions on `L` sites, `|psi> = prod_n (sum_i U_in c_i^dag) |0>`.
#[derive(Clone, Debug)]
pub struct GaussianState {
    modes: Mat<C64>,
    time: f64,
    orthonormal: bool,
    unnormalized_layers: usize,
}

impl GaussianState {
    /// Wraps a caller-provided mode matrix; its columns must be orthonormal.
    pub fn from_modes(modes: Mat<C64>, time: f64) -> Result<Self> {
        if modes.ncols() == 0 || modes.ncols() > modes.nrows() {
            return Err(Error::Dimension(format!(
                "mode matrix must be L x N with 1 <= N <= L, got {} x {}",
                modes.nrows(),
                modes.ncols()
            )));
        }
        let state = Self {
            modes,
            time,
            orthonormal: true,
            unnormalized_layers: 0,
        };
        let err = state.orthonormality_error();
        if err > ORTHONORMALITY_TOL {
            return Err(Error::param(format!(
                "mode matrix columns are not orthonormal (max |U^dag U - I| = {err:.3e})"
            )));
        }
        Ok(state)
    }

    /// Wraps an arbitrary full-rank mode matrix and orthonormalizes it.
    pub fn from_unnormalized(modes: Mat<C64>, time: f64, method: QrMethod) -> Result<Self> {
        let mut state = Self {
            modes,
            time,
            orthonormal: false,
            unnormalized_layers: 0,
        };
        state.normalize(method)?;
        Ok(state)
    }

    /// Product state with one particle on each listed site (0-based).
    /// Columns are ordered by ascending site.
    pub fn from_occupied_sites(sites: usize, occupied: &[usize]) -> Result<Self> {
        let mut occ = occupied.to_vec();
        occ.sort_unstable();
        occ.dedup();
        if occ.len() != occupied.len() {
            return Err(Error::param("occupied sites must be distinct"));
        }
        if occ.is_empty() || occ.len() > sites {
            return Err(Error::param(format!(
                "need 1 <= N <= L particles, got {} on {sites} sites",
                occ.len()
            )));
        }
        if let Some(&bad) = occ.iter().find(|&&s| s >= sites) {
            return Err(Error::param(format!(
                "site {bad} outside chain of length {sites}"
            )));
        }
        let modes = Mat::from_fn(sites, occ.len(), |i, n| {
            if i == occ[n] {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        Ok(Self {
            modes,
            time: 0.0,
            orthonormal: true,
            unnormalized_layers: 0,
        })
    }

    /// `N` particles on a uniformly random `N`-subset of the sites, fully
    /// determined by `seed`.
    pub fn init_random_occupation(params: &ModelParams, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_occupation_with(params, &mut rng)
    }

    pub(crate) fn random_occupation_with(
        params: &ModelParams,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let (l, n) = (params.sites, params.particles);
        if n < 1 || n > l {
            return Err(Error::param(format!(
                "need 1 <= N <= L, got N = {n}, L = {l}"
            )));
        }
        let sites = rand::seq::index::sample(rng, l, n).into_vec();
        Self::from_occupied_sites(l, &sites)
    }

    pub fn sites(&self) -> usize {
        self.modes.nrows()
    }

    pub fn particles(&self) -> usize {
        self.modes.ncols()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, time: f64) {
        self.time = time;
    }

    pub(crate) fn advance_time(&mut self, dt: f64) {
        self.time += dt;
    }

    pub fn modes(&self) -> MatRef<'_, C64> {
        self.modes.as_ref()
    }

    /// Mutable access to the mode matrix. The state is flagged as
    /// non-orthonormal until the next [`normalize`](Self::normalize).
    pub fn modes_mut(&mut self) -> MatMut<'_, C64> {
        self.orthonormal = false;
        self.modes.as_mut()
    }

    /// Mutable access that keeps the orthonormality flag; only for unitary
    /// updates.
    pub(crate) fn modes_mut_unitary(&mut self) -> MatMut<'_, C64> {
        self.modes.as_mut()
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    /// `max |U^dag U - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let n = self.particles();
        let mut gram = Mat::<C64>::zeros(n, n);
        matmul(
            gram.as_mut(),
            Accum::Replace,
            self.modes.adjoint(),
            self.modes.as_ref(),
            C64::new(1.0, 0.0),
            Par::Seq,
        );
        let mut err = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((gram[(i, j)] - target).norm());
            }
        }
        err
    }

    /// Replaces `U` by the `Q` factor of its thin QR decomposition (positive
    /// real diagonal of `R`). The column span, hence the many-body state, is
    /// unchanged.
    pub fn normalize(&mut self, method: QrMethod) -> Result<()> {
        match method {
            QrMethod::Householder => householder_in_place(&mut self.modes)?,
            QrMethod::Cholesky => {
                if cholesky_qr_in_place(&mut self.modes)? {
                    // badly conditioned input: one more pass restores
                    // orthonormality to rounding level
                    cholesky_qr_in_place(&mut self.modes)?;
                }
            }
        }
        self.orthonormal = true;
        self.unnormalized_layers = 0;
        Ok(())
    }

    /// Counts one non-unitary layer applied since the last normalization and
    /// returns the running count.
    pub(crate) fn note_unnormalized_layer(&mut self) -> usize {
        self.unnormalized_layers += 1;
        self.unnormalized_layers
    }

    /// Normalizes only if the orthonormality flag is cleared.
    pub fn ensure_normalized(&mut self, method: QrMethod) -> Result<()> {
        if !self.orthonormal {
            self.normalize(method)?;
        }
        Ok(())
    }

    /// `G_ij = <c_i^dag c_j> = sum_n conj(U_in) U_jn`, i.e. `conj(U U^dag)`.
    ///
    /// A state flagged as non-orthonormal is normalized on a copy first.
    pub fn correlation_matrix(&self) -> CorrelationMatrix {
        if !self.orthonormal {
            let mut copy = self.clone();
            if copy.normalize(QrMethod::Householder).is_ok() {
                return copy.correlation_matrix();
            }
        }
        let l = self.sites();
        let mut g = Mat::<C64>::zeros(l, l);
        matmul(
            g.as_mut(),
            Accum::Replace,
            self.modes.conjugate(),
            self.modes.transpose(),
            C64::new(1.0, 0.0),
            Par::Seq,
        );
        CorrelationMatrix { g }
    }
}

fn householder_in_place(modes: &mut Mat<C64>) -> Result<()> {
    let n = modes.ncols();
    let qr = modes.qr();
    let r = qr.thin_R();
    let mut phases = Vec::with_capacity(n);
    let mut min_diag = f64::INFINITY;
    for j in 0..n {
        let d = r[(j, j)];
        let mag = d.norm();
        min_diag = min_diag.min(mag);
        phases.push(if mag > 0.0 {
            d / mag
        } else {
            C64::new(1.0, 0.0)
        });
    }
    if !(min_diag >= DEGENERACY_THRESHOLD) {
        return Err(Error::Degenerate { min_diag });
    }
    let mut q = qr.compute_thin_Q();
    for (j, phase) in phases.into_iter().enumerate() {
        for x in q.col_mut(j).iter_mut() {
            *x *= phase;
        }
    }
    *modes = q;
    Ok(())
}

/// One Cholesky-QR pass. Returns whether a second pass is advisable.
fn cholesky_qr_in_place(modes: &mut Mat<C64>) -> Result<bool> {
    let n = modes.ncols();
    let mut gram = Mat::<C64>::zeros(n, n);
    matmul(
        gram.as_mut(),
        Accum::Replace,
        modes.adjoint(),
        modes.as_ref(),
        C64::new(1.0, 0.0),
        Par::Seq,
    );
    let llt = match gram.llt(Side::Lower) {
        Ok(llt) => llt,
        // Gram matrix numerically indefinite: fall back to Householder, which
        // also produces the accurate degeneracy diagnostic.
        Err(_) => {
            householder_in_place(modes)?;
            return Ok(false);
        }
    };
    let lower = llt.L();
    let (mut min_diag, mut max_diag) = (f64::INFINITY, 0.0f64);
    for j in 0..n {
        let d = lower[(j, j)].re;
        min_diag = min_diag.min(d);
        max_diag = max_diag.max(d);
    }
    if !(min_diag >= CHOLESKY_FALLBACK_RATIO * max_diag) {
        householder_in_place(modes)?;
        return Ok(false);
    }
    // U = Q R with R = L^dag  <=>  conj(L) Q^T = U^T
    solve_lower_triangular_in_place(lower.conjugate(), modes.as_mut().transpose_mut(), Par::Seq);
    Ok(max_diag / min_diag > CHOLESKY_SECOND_PASS_SPREAD)
}

/// Single-particle correlation matrix `G_ij = <c_i^dag c_j>` (`L x L`,
/// Hermitian).
#[derive(Clone, Debug)]
pub struct CorrelationMatrix {
    g: Mat<C64>,
}

impl CorrelationMatrix {
    /// Wraps a square matrix after checking Hermiticity to `1e-10`.
    pub fn from_matrix(g: Mat<C64>) -> Result<Self> {
        if g.nrows() != g.ncols() {
            return Err(Error::Dimension(format!(
                "correlation matrix must be square, got {} x {}",
                g.nrows(),
                g.ncols()
            )));
        }
        let cm = Self { g };
        let herm = cm.hermiticity_error();
        if herm > 1e-10 {
            return Err(Error::Consistency(format!(
                "correlation matrix not Hermitian (max |G - G^dag| = {herm:.3e})"
            )));
        }
        Ok(cm)
    }

    pub fn sites(&self) -> usize {
        self.g.nrows()
    }

    pub fn as_ref(&self) -> MatRef<'_, C64> {
        self.g.as_ref()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.g[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        (0..self.sites()).map(|i| self.g[(i, i)].re).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let l = self.sites();
        let mut err = 0.0f64;
        for j in 0..l {
            for i in 0..=j {
                err = err.max((self.g[(i, j)] - self.g[(j, i)].conj()).norm());
            }
        }
        err
    }

    /// Principal submatrix on `region` (0-based site indices).
    pub fn submatrix(&self, region: &[usize]) -> Mat<C64> {
        Mat::from_fn(region.len(), region.len(), |a, b| {
            self.g[(region[a], region[b])]
        })
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        hermitian_eigenvalues(self.g.as_ref())
    }

    /// `max |G_a - G_b|` over all entries.
    pub fn max_abs_diff(&self, other: &CorrelationMatrix) -> f64 {
        let l = self.sites();
        assert_eq!(l, other.sites(), "correlation matrices of different size");
        let mut d = 0.0f64;
        for j in 0..l {
            for i in 0..l {
                d = d.max((self.g[(i, j)] - other.g[(i, j)]).norm());
            }
        }
        d
    }
}

/// Eigenvalues of a Hermitian matrix (lower triangle is read), ascending.
pub(crate) fn hermitian_eigenvalues(m: MatRef<'_, C64>) -> Result<Vec<f64>> {
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Consistency(format!("Hermitian eigensolver failed: {e:?}")))
}
