//! Exact unitary evolution through the spectral decomposition of `H`, and
//! its coarse-grained shadow on phase-cell weights.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cells::PhaseCellDecomposition;
use crate::error::{Error, Result};
use crate::hilbert::{
    adjoint_mat_vec, check_len, diagonalize, inner, mat_vec, norm, ManyBodyOperator,
    SpectralDecomposition, C64,
};

/// Relative tolerance for `V Λ V† == H`.
pub const RECONSTRUCTION_TOL: f64 = 1e-9;

/// Largest `|⟨φ₁|φ₂⟩|` accepted as an orthogonal pair.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

pub const MIN_ENSEMBLE_SAMPLES: usize = 200;

#[derive(Clone, Debug)]
pub struct EvolutionContext {
    hamiltonian: ManyBodyOperator,
    spectrum: SpectralDecomposition,
    hbar: f64,
}

impl EvolutionContext {
    pub fn new(hamiltonian: ManyBodyOperator, hbar: f64) -> Result<Self> {
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::InvalidArgument(format!("hbar must be positive, got {hbar}")));
        }
        let spectrum = diagonalize(&hamiltonian)?;
        let err = spectrum.reconstruction_error(hamiltonian.matrix());
        if err > RECONSTRUCTION_TOL {
            return Err(Error::Eigensolver(format!(
                "spectrum reconstructs the Hamiltonian only to {err:.3e}"
            )));
        }
        Ok(Self {
            hamiltonian,
            spectrum,
            hbar,
        })
    }

    /// `ħ = 1`.
    pub fn with_unit_hbar(hamiltonian: ManyBodyOperator) -> Result<Self> {
        Self::new(hamiltonian, 1.0)
    }

    pub fn hamiltonian(&self) -> &ManyBodyOperator {
        &self.hamiltonian
    }

    pub fn spectrum(&self) -> &SpectralDecomposition {
        &self.spectrum
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn dimension(&self) -> usize {
        self.spectrum.dimension()
    }

    fn phases(&self, t: f64) -> Vec<C64> {
        self.spectrum
            .eigenvalues()
            .iter()
            .map(|e| C64::from_polar(1.0, -e * t / self.hbar))
            .collect()
    }

    /// `Σ_n ⟨ψ_n|ψ⟩ e^{-iE_n t/ħ} ψ_n`.
    pub fn evolve(&self, psi: &[C64], t: f64) -> Result<Vec<C64>> {
        check_len(self.dimension(), psi.len())?;
        check_time(t)?;
        let v = self.spectrum.eigenvectors();
        let mut c = adjoint_mat_vec(v, psi);
        for (c, p) in c.iter_mut().zip(self.phases(t)) {
            *c *= p;
        }
        Ok(mat_vec(v, &c))
    }

    /// Dense `U(t)`.
    pub fn propagator(&self, t: f64) -> Result<Mat<C64>> {
        check_time(t)?;
        Ok(self
            .spectrum
            .apply_function(|e| C64::from_polar(1.0, -e * t / self.hbar)))
    }
}

pub fn evolve(ctx: &EvolutionContext, psi: &[C64], t: f64) -> Result<Vec<C64>> {
    ctx.evolve(psi, t)
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("time must be finite, got {t}")))
    }
}

/// Evolution expressed in the phase-cell basis: `M(t) = W† e^{-iΛt/ħ} W`
/// with `W = V_H† Φ`, so `b(t) = M(t) b(0)`.
struct CellPropagator<'a> {
    ctx: &'a EvolutionContext,
    w: Mat<C64>,
}

impl<'a> CellPropagator<'a> {
    fn new(ctx: &'a EvolutionContext, decomp: &PhaseCellDecomposition) -> Result<Self> {
        check_len(ctx.dimension(), decomp.dimension())?;
        let w = ctx.spectrum.eigenvectors().adjoint() * decomp.total_basis();
        Ok(Self { ctx, w })
    }

    fn matrix(&self, t: f64) -> Mat<C64> {
        let phases = self.ctx.phases(t);
        let w = self.w.as_ref();
        let dw = Mat::from_fn(w.nrows(), w.ncols(), |i, j| phases[i] * w[(i, j)]);
        w.adjoint() * &dw
    }

    fn apply(&self, b: &[C64], t: f64) -> Vec<C64> {
        let phases = self.ctx.phases(t);
        let mut c = mat_vec(self.w.as_ref(), b);
        for (c, p) in c.iter_mut().zip(phases) {
            *c *= p;
        }
        adjoint_mat_vec(self.w.as_ref(), &c)
    }
}

fn cell_weights(decomp: &PhaseCellDecomposition, b: &[C64]) -> Vec<f64> {
    decomp
        .cells()
        .iter()
        .map(|c| b[c.offset..c.offset + c.dim].iter().map(|z| z.norm_sqr()).sum())
        .collect()
}

fn unit_coefficients(decomp: &PhaseCellDecomposition, psi: &[C64]) -> Result<Vec<C64>> {
    check_len(decomp.dimension(), psi.len())?;
    let n = norm(psi);
    if n == 0.0 {
        return Err(Error::InvalidArgument("zero state vector".into()));
    }
    if (n - 1.0).abs() > 1e-8 {
        tracing::warn!(norm = n, "state is not normalized; renormalizing");
    }
    Ok(decomp.coefficients(psi)?.into_iter().map(|b| b / n).collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightTrajectory {
    pub times: Vec<f64>,
    /// `weights[k][J]` is `w_J(times[k])`.
    pub weights: Vec<Vec<f64>>,
    /// `true` for evolved coefficients, `false` for `T(t)·w(0)`.
    pub exact: bool,
}

/// `w_J(t)` from the evolved coefficients `b_Ji(t)`.
pub fn weights_trajectory(
    ctx: &EvolutionContext,
    psi: &[C64],
    decomp: &PhaseCellDecomposition,
    times: &[f64],
) -> Result<WeightTrajectory> {
    times.iter().try_for_each(|&t| check_time(t))?;
    let prop = CellPropagator::new(ctx, decomp)?;
    let b0 = unit_coefficients(decomp, psi)?;
    let weights = times
        .par_iter()
        .map(|&t| cell_weights(decomp, &prop.apply(&b0, t)))
        .collect();
    Ok(WeightTrajectory {
        times: times.to_vec(),
        weights,
        exact: true,
    })
}

/// `T(t)·w(0)` in column-stochastic mode.
pub fn predicted_trajectory(
    ctx: &EvolutionContext,
    psi: &[C64],
    decomp: &PhaseCellDecomposition,
    times: &[f64],
) -> Result<WeightTrajectory> {
    let w0 = cell_weights(decomp, &unit_coefficients(decomp, psi)?);
    let weights = transition_matrices(ctx, decomp, times, Normalization::ColumnStochastic)?
        .iter()
        .map(|t| t.apply(&w0))
        .collect::<Result<Vec<_>>>()?;
    Ok(WeightTrajectory {
        times: times.to_vec(),
        weights,
        exact: false,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Divide by `D_J′`; columns sum to one.
    #[default]
    ColumnStochastic,
    /// Divide by `D_J`.
    TargetDimension,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransitionMatrix {
    /// `entries[J][J′]`.
    pub entries: Vec<Vec<f64>>,
    pub t: f64,
    pub normalization: Normalization,
}

impl TransitionMatrix {
    pub fn num_cells(&self) -> usize {
        self.entries.len()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.num_cells())
            .map(|j| self.entries.iter().map(|row| row[j]).sum())
            .collect()
    }

    /// `max |T - I|`.
    pub fn identity_deviation(&self) -> f64 {
        let mut out: f64 = 0.0;
        for (j, row) in self.entries.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                let target = if j == k { 1.0 } else { 0.0 };
                out = out.max((v - target).abs());
            }
        }
        out
    }

    /// `T w`.
    pub fn apply(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_len(self.num_cells(), w.len())?;
        Ok(self
            .entries
            .iter()
            .map(|row| row.iter().zip(w).map(|(t, w)| t * w).sum())
            .collect())
    }
}

fn transition_from_amplitudes(
    decomp: &PhaseCellDecomposition,
    m: &Mat<C64>,
    t: f64,
    normalization: Normalization,
) -> TransitionMatrix {
    let cells = decomp.cells();
    let entries = cells
        .iter()
        .map(|row| {
            cells
                .iter()
                .map(|col| {
                    let mut sum = 0.0;
                    for i in row.offset..row.offset + row.dim {
                        for k in col.offset..col.offset + col.dim {
                            sum += m[(i, k)].norm_sqr();
                        }
                    }
                    let d = match normalization {
                        Normalization::ColumnStochastic => col.dim,
                        Normalization::TargetDimension => row.dim,
                    };
                    sum / d as f64
                })
                .collect()
        })
        .collect();
    TransitionMatrix {
        entries,
        t,
        normalization,
    }
}

/// `T_JJ′(t) = Σ_{ii′} |⟨Φ_Ji|U(t)|Φ_J′i′⟩|²`, divided by `D_J′` or `D_J`.
pub fn transition_matrix(
    ctx: &EvolutionContext,
    decomp: &PhaseCellDecomposition,
    t: f64,
    normalization: Normalization,
) -> Result<TransitionMatrix> {
    Ok(transition_matrices(ctx, decomp, &[t], normalization)?.remove(0))
}

pub fn transition_matrices(
    ctx: &EvolutionContext,
    decomp: &PhaseCellDecomposition,
    times: &[f64],
    normalization: Normalization,
) -> Result<Vec<TransitionMatrix>> {
    times.iter().try_for_each(|&t| check_time(t))?;
    let prop = CellPropagator::new(ctx, decomp)?;
    Ok(times
        .par_iter()
        .map(|&t| transition_from_amplitudes(decomp, &prop.matrix(t), t, normalization))
        .collect())
}

/// `min_J T_JJ`; requires the column-stochastic normalization.
pub fn diagonality_index(t: &TransitionMatrix) -> Result<f64> {
    if t.normalization != Normalization::ColumnStochastic {
        return Err(Error::InvalidArgument(
            "diagonality index needs a column-stochastic transition matrix".into(),
        ));
    }
    Ok((0..t.num_cells())
        .map(|j| t.entries[j][j])
        .fold(f64::INFINITY, f64::min))
}

/// `max_J |w_J(t) - (T(t)·w(0))_J|`.
pub fn disorder_residual(
    ctx: &EvolutionContext,
    psi: &[C64],
    decomp: &PhaseCellDecomposition,
    t: f64,
) -> Result<f64> {
    check_time(t)?;
    let prop = CellPropagator::new(ctx, decomp)?;
    let b0 = unit_coefficients(decomp, psi)?;
    let m = prop.matrix(t);
    let exact = cell_weights(decomp, &mat_vec(m.as_ref(), &b0));
    let predicted = transition_from_amplitudes(decomp, &m, t, Normalization::ColumnStochastic)
        .apply(&cell_weights(decomp, &b0))?;
    Ok(max_abs_diff(&exact, &predicted))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub samples: usize,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            samples: MIN_ENSEMBLE_SAMPLES,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DisorderReport {
    pub t: f64,
    pub initial_weights: Vec<f64>,
    pub exact: Vec<f64>,
    /// `T(t)·w(0)`.
    pub predicted: Vec<f64>,
    pub residual: f64,
    pub samples: usize,
    /// Mean of `w(t)` over random intra-cell phases of `b_Ji(0)`.
    pub ensemble_mean: Vec<f64>,
    pub ensemble_std_error: Vec<f64>,
    pub ensemble_residual: f64,
    /// `3 · max_J SE_J`.
    pub band: f64,
    /// `ensemble_residual ≤ band + 1e-12`.
    pub ensemble_consistent: bool,
}

/// Exact residual plus the Monte-Carlo check over independent uniform
/// phases `b_Ji → e^{iθ_Ji} b_Ji`.
pub fn disorder_check(
    ctx: &EvolutionContext,
    psi: &[C64],
    decomp: &PhaseCellDecomposition,
    t: f64,
    ensemble: EnsembleConfig,
) -> Result<DisorderReport> {
    check_time(t)?;
    if ensemble.samples < 2 {
        return Err(Error::InvalidArgument("ensemble needs at least two samples".into()));
    }
    if ensemble.samples < MIN_ENSEMBLE_SAMPLES {
        tracing::warn!(samples = ensemble.samples, "fewer ensemble samples than recommended");
    }
    let prop = CellPropagator::new(ctx, decomp)?;
    let b0 = unit_coefficients(decomp, psi)?;
    let m = prop.matrix(t);
    let w0 = cell_weights(decomp, &b0);
    let exact = cell_weights(decomp, &mat_vec(m.as_ref(), &b0));
    let predicted =
        transition_from_amplitudes(decomp, &m, t, Normalization::ColumnStochastic).apply(&w0)?;

    let k = decomp.num_cells();
    let mut rng = ChaCha8Rng::seed_from_u64(ensemble.seed);
    let mut sum = vec![0.0; k];
    let mut sum_sq = vec![0.0; k];
    let mut b = vec![C64::new(0.0, 0.0); b0.len()];
    for _ in 0..ensemble.samples {
        for (out, orig) in b.iter_mut().zip(&b0) {
            let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            *out = orig * C64::from_polar(1.0, theta);
        }
        let w = cell_weights(decomp, &mat_vec(m.as_ref(), &b));
        for j in 0..k {
            sum[j] += w[j];
            sum_sq[j] += w[j] * w[j];
        }
    }
    let n = ensemble.samples as f64;
    let ensemble_mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let ensemble_std_error: Vec<f64> = (0..k)
        .map(|j| {
            let var = (sum_sq[j] - n * ensemble_mean[j].powi(2)) / (n - 1.0);
            (var.max(0.0) / n).sqrt()
        })
        .collect();
    let band = 3.0 * ensemble_std_error.iter().copied().fold(0.0, f64::max);
    let ensemble_residual = max_abs_diff(&ensemble_mean, &predicted);

    Ok(DisorderReport {
        t,
        residual: max_abs_diff(&exact, &predicted),
        ensemble_residual,
        initial_weights: w0,
        exact,
        predicted,
        samples: ensemble.samples,
        ensemble_mean,
        ensemble_std_error,
        band,
        ensemble_consistent: ensemble_residual <= band + 1e-12,
    })
}

/// `b_Ji = e^{iθ} √(w_J / D_J)`: uniform modulus inside each cell.
pub fn uniform_in_cells(decomp: &PhaseCellDecomposition, weights: &[f64]) -> Result<Vec<C64>> {
    check_len(decomp.num_cells(), weights.len())?;
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidArgument("weights must be non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("weights sum to zero".into()));
    }
    let b: Vec<C64> = decomp
        .cells()
        .iter()
        .zip(weights)
        .flat_map(|(c, w)| std::iter::repeat(C64::new((w / total / c.dim as f64).sqrt(), 0.0)).take(c.dim))
        .collect();
    Ok(mat_vec(decomp.total_basis(), &b))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RevivalPoint {
    pub t: f64,
    /// `⟨φ₁(t)|φ₂(t)⟩`, conserved by unitarity.
    pub inner_re: f64,
    pub inner_im: f64,
    /// `max_J |⟨φ₁(t)|P_J|φ₂(t)⟩|`.
    pub cell_overlap: f64,
    /// `⟨Φ|Ā|Φ⟩/‖Φ‖²` with `Φ = φ₁(t) + φ₂(t)`.
    pub superposition: f64,
    /// `(⟨φ₁|Ā|φ₁⟩ + ⟨φ₂|Ā|φ₂⟩)/2`.
    pub mixture: f64,
    pub interference: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RevivalReport {
    pub observable: usize,
    pub points: Vec<RevivalPoint>,
}

impl RevivalReport {
    /// Point with the largest `cell_overlap`.
    pub fn peak(&self) -> Option<&RevivalPoint> {
        self.points
            .iter()
            .max_by(|a, b| a.cell_overlap.total_cmp(&b.cell_overlap))
    }
}

/// Evolves an orthogonal pair separately and compares their superposition
/// with the 50/50 mixture under coarse observable `index`.
pub fn revival_scenario(
    ctx: &EvolutionContext,
    phi1: &[C64],
    phi2: &[C64],
    decomp: &PhaseCellDecomposition,
    index: usize,
    times: &[f64],
) -> Result<RevivalReport> {
    check_len(ctx.dimension(), phi1.len())?;
    check_len(ctx.dimension(), phi2.len())?;
    check_len(ctx.dimension(), decomp.dimension())?;
    if index >= decomp.num_observables() {
        return Err(Error::IndexOutOfRange {
            index,
            len: decomp.num_observables(),
        });
    }
    let initial = inner(phi1, phi2).norm();
    if initial > ORTHOGONALITY_TOL {
        return Err(Error::Precondition(format!(
            "initial states are not orthogonal (|⟨φ₁|φ₂⟩| = {initial:.3e})"
        )));
    }
    times.iter().try_for_each(|&t| check_time(t))?;
    let points = times
        .par_iter()
        .map(|&t| {
            let a = ctx.evolve(phi1, t)?;
            let b = ctx.evolve(phi2, t)?;
            let z = inner(&a, &b);
            let ca = decomp.coefficients(&a)?;
            let cb = decomp.coefficients(&b)?;
            let cell_overlap = decomp
                .cells()
                .iter()
                .map(|c| inner(&ca[c.offset..c.offset + c.dim], &cb[c.offset..c.offset + c.dim]).norm())
                .fold(0.0, f64::max);
            let sum: Vec<C64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let quad = |v: &[C64]| -> Result<f64> { Ok(inner(v, &decomp.apply_coarse(index, v)?).re) };
            let superposition = quad(&sum)? / norm(&sum).powi(2);
            let mixture = 0.5 * (quad(&a)? / norm(&a).powi(2) + quad(&b)? / norm(&b).powi(2));
            Ok(RevivalPoint {
                t,
                inner_re: z.re,
                inner_im: z.im,
                cell_overlap,
                superposition,
                mixture,
                interference: superposition - mixture,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RevivalReport {
        observable: index,
        points,
    })
}
