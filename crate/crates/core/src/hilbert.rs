//! Tensor-product state spaces, operator embedding and dense spectral
//! decomposition.
//!
//! Basis convention: the computational product basis with site 0 as the most
//! significant digit, i.e. `index = Σ_k s_k · d^(f-1-k)`. Every example and
//! test in the crate assumes this ordering.

use std::fmt;
use std::str::FromStr;

use faer::{Mat, MatRef, Side};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Largest Hilbert space dimension accepted by [`HilbertSpace::new`].
pub const DEFAULT_DIMENSION_CAP: usize = 1 << 14;

/// Max-abs tolerance for the hermiticity flag.
pub const HERMITIAN_TOL: f64 = 1e-12;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HilbertSpace {
    num_sites: usize,
    local_dim: usize,
    dimension: usize,
}

impl HilbertSpace {
    pub fn new(num_sites: usize, local_dim: usize) -> Result<Self> {
        Self::with_cap(num_sites, local_dim, DEFAULT_DIMENSION_CAP)
    }

    /// Spin-1/2 chain of `num_sites` sites.
    pub fn qubits(num_sites: usize) -> Result<Self> {
        Self::new(num_sites, 2)
    }

    pub fn with_cap(num_sites: usize, local_dim: usize, cap: usize) -> Result<Self> {
        if num_sites == 0 || local_dim == 0 {
            return Err(Error::InvalidArgument(
                "number of sites and local dimension must be positive".into(),
            ));
        }
        let cap_err = Error::DimensionCap {
            num_sites,
            local_dim,
            cap,
        };
        let exp = u32::try_from(num_sites).map_err(|_| {
            Error::DimensionCap {
                num_sites,
                local_dim,
                cap,
            }
        })?;
        let dimension = local_dim.checked_pow(exp).ok_or(cap_err)?;
        if dimension > cap {
            return Err(Error::DimensionCap {
                num_sites,
                local_dim,
                cap,
            });
        }
        Ok(Self {
            num_sites,
            local_dim,
            dimension,
        })
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Place value of `site` in a basis index.
    pub fn stride(&self, site: usize) -> usize {
        self.local_dim.pow((self.num_sites - 1 - site) as u32)
    }

    /// Local basis state of every site for a basis index, site 0 first.
    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.num_sites];
        for slot in out.iter_mut().rev() {
            *slot = index % self.local_dim;
            index /= self.local_dim;
        }
        out
    }

    pub fn index_of(&self, digits: &[usize]) -> usize {
        digits
            .iter()
            .fold(0, |acc, &digit| acc * self.local_dim + digit)
    }
}

/// An `n`-body operator acting on an ordered set of sites.
#[derive(Clone, Debug)]
pub struct LocalOperator {
    support: Vec<usize>,
    matrix: Mat<C64>,
    hermitian: bool,
}

impl LocalOperator {
    pub fn new(support: Vec<usize>, matrix: Mat<C64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidSupport("support is empty".into()));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSupport(format!(
                "support {support:?} is not strictly increasing"
            )));
        }
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                actual: matrix.ncols(),
            });
        }
        let hermitian = hermitian_deviation(matrix.as_ref()) <= HERMITIAN_TOL;
        Ok(Self {
            support,
            matrix,
            hermitian,
        })
    }

    /// Same matrix acting on a different set of sites.
    pub fn moved_to(&self, support: Vec<usize>) -> Result<Self> {
        if support.len() != self.support.len() {
            return Err(Error::InvalidSupport(format!(
                "template acts on {} sites, placement has {}",
                self.support.len(),
                support.len()
            )));
        }
        Self::new(support, self.matrix.clone())
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn matrix(&self) -> MatRef<'_, C64> {
        self.matrix.as_ref()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn body_count(&self) -> usize {
        self.support.len()
    }

    /// Local site dimension `d` with `d^n == matrix size`, if one exists.
    pub fn local_dim(&self) -> Option<usize> {
        integer_root(self.matrix.nrows(), self.support.len())
    }
}

fn integer_root(value: usize, n: usize) -> Option<usize> {
    let guess = (value as f64).powf(1.0 / n as f64).round() as usize;
    (guess.saturating_sub(1)..=guess + 1)
        .find(|&d| d > 0 && d.checked_pow(n as u32) == Some(value))
}

/// A dense operator on the full tensor-product space.
#[derive(Clone, Debug)]
pub struct ManyBodyOperator {
    space: HilbertSpace,
    matrix: Mat<C64>,
    hermitian: bool,
}

impl ManyBodyOperator {
    /// Wraps a matrix; the hermiticity flag is computed from the entries.
    pub fn new(space: HilbertSpace, matrix: Mat<C64>) -> Result<Self> {
        check_square(&space, matrix.as_ref())?;
        let hermitian = hermitian_deviation(matrix.as_ref()) <= HERMITIAN_TOL;
        Ok(Self {
            space,
            matrix,
            hermitian,
        })
    }

    /// Hermitian part `(M + M†)/2` of a matrix that is Hermitian up to
    /// rounding.
    pub fn hermitian_from(space: HilbertSpace, matrix: Mat<C64>) -> Result<Self> {
        check_square(&space, matrix.as_ref())?;
        let matrix = hermitian_part(matrix.as_ref());
        Ok(Self {
            space,
            matrix,
            hermitian: true,
        })
    }

    pub fn identity(space: HilbertSpace) -> Self {
        let dim = space.dimension();
        Self {
            space,
            matrix: Mat::identity(dim, dim),
            hermitian: true,
        }
    }

    pub fn zeros(space: HilbertSpace) -> Self {
        let dim = space.dimension();
        Self {
            space,
            matrix: Mat::zeros(dim, dim),
            hermitian: true,
        }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> MatRef<'_, C64> {
        self.matrix.as_ref()
    }

    pub fn into_matrix(self) -> Mat<C64> {
        self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn dimension(&self) -> usize {
        self.space.dimension()
    }

    pub fn apply(&self, psi: &[C64]) -> Result<Vec<C64>> {
        check_len(self.dimension(), psi.len())?;
        Ok(mat_vec(self.matrix.as_ref(), psi))
    }

    /// `⟨psi|A|psi⟩`.
    pub fn expectation(&self, psi: &[C64]) -> Result<C64> {
        let applied = self.apply(psi)?;
        Ok(inner(psi, &applied))
    }

    /// `⟨left|A|right⟩`.
    pub fn matrix_element(&self, left: &[C64], right: &[C64]) -> Result<C64> {
        check_len(self.dimension(), left.len())?;
        let applied = self.apply(right)?;
        Ok(inner(left, &applied))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let matrix = Mat::from_fn(self.dimension(), self.dimension(), |i, j| {
            self.matrix[(i, j)] * factor
        });
        Self {
            space: self.space,
            matrix,
            hermitian: self.hermitian,
        }
    }

    pub fn product(&self, other: &Self) -> Result<Mat<C64>> {
        self.check_same_space(other)?;
        Ok(&self.matrix * &other.matrix)
    }

    /// `[A, B] = AB - BA` as a plain matrix.
    pub fn commutator(&self, other: &Self) -> Result<Mat<C64>> {
        self.check_same_space(other)?;
        Ok(&self.matrix * &other.matrix - &other.matrix * &self.matrix)
    }

    pub fn check_same_space(&self, other: &Self) -> Result<()> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch);
        }
        Ok(())
    }
}

fn check_square(space: &HilbertSpace, matrix: MatRef<'_, C64>) -> Result<()> {
    let dim = space.dimension();
    if matrix.nrows() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: matrix.nrows(),
        });
    }
    if matrix.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: matrix.ncols(),
        });
    }
    Ok(())
}

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Embeds `local` as `a ⊗ 1` on the full space.
pub fn embed(local: &LocalOperator, space: &HilbertSpace) -> Result<ManyBodyOperator> {
    let dim = space.dimension();
    let mut matrix = Mat::zeros(dim, dim);
    embed_into(local, space, 1.0, &mut matrix)?;
    Ok(ManyBodyOperator {
        space: *space,
        matrix,
        hermitian: local.is_hermitian(),
    })
}

/// Adds `coeff · (a ⊗ 1)` into `target` without materializing the embedding.
pub(crate) fn embed_into(
    local: &LocalOperator,
    space: &HilbertSpace,
    coeff: f64,
    target: &mut Mat<C64>,
) -> Result<()> {
    let support = local.support();
    if let Some(&site) = support.iter().find(|&&s| s >= space.num_sites()) {
        return Err(Error::SiteOutOfRange {
            site,
            num_sites: space.num_sites(),
        });
    }
    let d = space.local_dim();
    let n = support.len();
    let local_dim_total = d.pow(n as u32);
    if local.matrix().nrows() != local_dim_total {
        return Err(Error::DimensionMismatch {
            expected: local_dim_total,
            actual: local.matrix().nrows(),
        });
    }
    check_square(space, target.as_ref())?;

    let strides: Vec<usize> = support.iter().map(|&s| space.stride(s)).collect();
    // offsets[l] = contribution of local index l to the full index.
    let offsets: Vec<usize> = (0..local_dim_total)
        .map(|l| {
            let mut rest = l;
            let mut offset = 0;
            for k in (0..n).rev() {
                offset += (rest % d) * strides[k];
                rest /= d;
            }
            offset
        })
        .collect();
    let a = local.matrix();
    for row in 0..space.dimension() {
        let mut local_row = 0;
        let mut base = row;
        for &stride in &strides {
            let digit = (row / stride) % d;
            local_row = local_row * d + digit;
            base -= digit * stride;
        }
        for (local_col, &offset) in offsets.iter().enumerate() {
            let value = a[(local_row, local_col)];
            if value != ZERO {
                target[(row, base + offset)] += value * coeff;
            }
        }
    }
    Ok(())
}

/// Eigenvalues in ascending order with orthonormal eigenvector columns.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: Mat<C64>,
}

impl SpectralDecomposition {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> MatRef<'_, C64> {
        self.eigenvectors.as_ref()
    }

    pub fn dimension(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V f(Λ) V†`.
    pub fn apply_function(&self, f: impl Fn(f64) -> C64) -> Mat<C64> {
        let v = self.eigenvectors.as_ref();
        let scaled = Mat::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * f(self.eigenvalues[j]));
        &scaled * v.adjoint()
    }

    pub fn reconstruct(&self) -> Mat<C64> {
        self.apply_function(|e| C64::new(e, 0.0))
    }

    /// `max |V†V - 1|`.
    pub fn orthonormality_error(&self) -> f64 {
        let v = self.eigenvectors.as_ref();
        let gram = v.adjoint() * v;
        identity_deviation(gram.as_ref())
    }

    /// `‖A - VΛV†‖_maxabs / ‖A‖_maxabs` (absolute when `A == 0`).
    pub fn reconstruction_error(&self, op: MatRef<'_, C64>) -> f64 {
        let diff = self.reconstruct() - op;
        let scale = max_abs(op);
        let err = max_abs(diff.as_ref());
        if scale > 0.0 {
            err / scale
        } else {
            err
        }
    }
}

pub fn diagonalize(op: &ManyBodyOperator) -> Result<SpectralDecomposition> {
    if !op.is_hermitian() {
        return Err(Error::NotHermitian {
            deviation: hermitian_deviation(op.matrix()),
        });
    }
    diagonalize_matrix(op.matrix())
}

/// Full spectral decomposition of a Hermitian matrix (only the lower
/// triangle is read).
pub(crate) fn diagonalize_matrix(matrix: MatRef<'_, C64>) -> Result<SpectralDecomposition> {
    let evd = matrix
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let eigenvalues = (0..s.nrows()).map(|i| s[i].re).collect();
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors: evd.U().to_owned(),
    })
}

/// Spectral norm. Returns NaN if the SVD fails to converge.
pub fn op_norm(op: &ManyBodyOperator) -> f64 {
    if op.is_hermitian() {
        hermitian_norm(op.matrix())
    } else {
        matrix_norm(op.matrix())
    }
}

pub(crate) fn hermitian_norm(matrix: MatRef<'_, C64>) -> f64 {
    match matrix.self_adjoint_eigenvalues(Side::Lower) {
        Ok(values) => values.iter().fold(0.0, |acc: f64, v| acc.max(v.abs())),
        Err(_) => f64::NAN,
    }
}

/// Largest singular value of an arbitrary square matrix.
pub fn matrix_norm(matrix: MatRef<'_, C64>) -> f64 {
    match matrix.singular_values() {
        Ok(values) => values.first().copied().unwrap_or(0.0),
        Err(_) => f64::NAN,
    }
}

/// Spectral norm of a matrix that is anti-Hermitian up to rounding, e.g. a
/// commutator of Hermitian operators.
pub fn anti_hermitian_norm(matrix: MatRef<'_, C64>) -> f64 {
    let times_i = Mat::from_fn(matrix.nrows(), matrix.ncols(), |r, c| matrix[(r, c)] * I);
    hermitian_norm(hermitian_part(times_i.as_ref()).as_ref())
}

/// Names of the built-in model Hamiltonians.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// `-J Σ σz σz - h Σ σx` on an open chain; couplings `[J, h]`.
    TransverseFieldIsing,
    /// `J Σ (σx σx + σy σy + Δ σz σz)` on an open chain; couplings `[J, Δ]`.
    HeisenbergXxz,
    /// Diagonal in the computational basis; couplings are the energies.
    DiagonalTest,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::TransverseFieldIsing => "transverse-field-ising",
            ModelKind::HeisenbergXxz => "heisenberg-xxz",
            ModelKind::DiagonalTest => "diagonal-test",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transverse-field-ising" => Ok(ModelKind::TransverseFieldIsing),
            "heisenberg-xxz" => Ok(ModelKind::HeisenbergXxz),
            "diagonal-test" => Ok(ModelKind::DiagonalTest),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }
}

pub fn build_hamiltonian(
    kind: ModelKind,
    space: &HilbertSpace,
    couplings: &[f64],
) -> Result<ManyBodyOperator> {
    let expect = |expected: usize| -> Result<()> {
        if couplings.len() != expected {
            return Err(Error::CouplingCount {
                model: kind.name(),
                expected,
                actual: couplings.len(),
            });
        }
        Ok(())
    };
    let require_qubits = || -> Result<()> {
        if space.local_dim() != 2 {
            return Err(Error::InvalidArgument(format!(
                "{kind} is defined for spin-1/2 sites, got local dimension {}",
                space.local_dim()
            )));
        }
        Ok(())
    };
    let dim = space.dimension();
    let f = space.num_sites();
    let mut h = Mat::zeros(dim, dim);
    match kind {
        ModelKind::TransverseFieldIsing => {
            expect(2)?;
            require_qubits()?;
            let (j, field) = (couplings[0], couplings[1]);
            let zz = LocalOperator::new(vec![0, 1], pauli_string("zz")?)?;
            let x = LocalOperator::new(vec![0], pauli::x())?;
            for k in 0..f.saturating_sub(1) {
                embed_into(&zz.moved_to(vec![k, k + 1])?, space, -j, &mut h)?;
            }
            for k in 0..f {
                embed_into(&x.moved_to(vec![k])?, space, -field, &mut h)?;
            }
        }
        ModelKind::HeisenbergXxz => {
            expect(2)?;
            require_qubits()?;
            let (j, anisotropy) = (couplings[0], couplings[1]);
            for (label, coeff) in [("xx", j), ("yy", j), ("zz", j * anisotropy)] {
                let term = LocalOperator::new(vec![0, 1], pauli_string(label)?)?;
                for k in 0..f.saturating_sub(1) {
                    embed_into(&term.moved_to(vec![k, k + 1])?, space, coeff, &mut h)?;
                }
            }
        }
        ModelKind::DiagonalTest => {
            expect(dim)?;
            for (i, &e) in couplings.iter().enumerate() {
                h[(i, i)] = C64::new(e, 0.0);
            }
        }
    }
    ManyBodyOperator::new(*space, h)
}

/// `Σ_k E_k |v_k⟩⟨v_k|` for the columns `v_k` of an orthonormal `basis`.
pub fn diagonal_in_basis(
    space: &HilbertSpace,
    basis: MatRef<'_, C64>,
    energies: &[f64],
) -> Result<ManyBodyOperator> {
    check_square(space, basis)?;
    check_len(space.dimension(), energies.len())?;
    let scaled = Mat::from_fn(basis.nrows(), basis.ncols(), |i, j| basis[(i, j)] * energies[j]);
    ManyBodyOperator::hermitian_from(*space, &scaled * basis.adjoint())
}

/// Single-site Pauli matrices in the `|0⟩ = up` convention.
pub mod pauli {
    use super::{C64, I, ONE, ZERO};
    use faer::Mat;

    pub fn identity() -> Mat<C64> {
        Mat::identity(2, 2)
    }

    pub fn x() -> Mat<C64> {
        from_rows([[ZERO, ONE], [ONE, ZERO]])
    }

    pub fn y() -> Mat<C64> {
        from_rows([[ZERO, -I], [I, ZERO]])
    }

    pub fn z() -> Mat<C64> {
        from_rows([[ONE, ZERO], [ZERO, -ONE]])
    }

    fn from_rows(rows: [[C64; 2]; 2]) -> Mat<C64> {
        Mat::from_fn(2, 2, |i, j| rows[i][j])
    }
}

/// Kronecker product of single-site Paulis, e.g. `"zx"` is `σz ⊗ σx`.
pub fn pauli_string(label: &str) -> Result<Mat<C64>> {
    if label.is_empty() {
        return Err(Error::InvalidArgument("empty pauli string".into()));
    }
    label.chars().try_fold(Mat::identity(1, 1), |acc, c| {
        let factor = match c.to_ascii_lowercase() {
            'i' => pauli::identity(),
            'x' => pauli::x(),
            'y' => pauli::y(),
            'z' => pauli::z(),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown pauli label `{other}`"
                )))
            }
        };
        Ok(kron(acc.as_ref(), factor.as_ref()))
    })
}

pub fn kron(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> Mat<C64> {
    let (br, bc) = (b.nrows(), b.ncols());
    Mat::from_fn(a.nrows() * br, a.ncols() * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

pub fn max_abs(m: MatRef<'_, C64>) -> f64 {
    let mut out = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out = out.max(m[(i, j)].norm());
        }
    }
    out
}

pub fn hermitian_deviation(m: MatRef<'_, C64>) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    let mut out = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..=j {
            out = out.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    out
}

pub fn identity_deviation(m: MatRef<'_, C64>) -> f64 {
    let mut out = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let target = if i == j { ONE } else { ZERO };
            out = out.max((m[(i, j)] - target).norm());
        }
    }
    out
}

pub(crate) fn hermitian_part(m: MatRef<'_, C64>) -> Mat<C64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

pub(crate) fn mat_vec(m: MatRef<'_, C64>, v: &[C64]) -> Vec<C64> {
    let col = faer::ColRef::from_slice(v);
    let out = m * col;
    (0..out.nrows()).map(|i| out[i]).collect()
}

/// `M† v`.
pub(crate) fn adjoint_mat_vec(m: MatRef<'_, C64>, v: &[C64]) -> Vec<C64> {
    let col = faer::ColRef::from_slice(v);
    let out = m.adjoint() * col;
    (0..out.nrows()).map(|i| out[i]).collect()
}

/// `⟨a|b⟩`, antilinear in the first argument.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Returns `v / ‖v‖`, or `None` for the zero vector.
pub fn normalized(v: &[C64]) -> Option<Vec<C64>> {
    let n = norm(v);
    (n > 0.0).then(|| v.iter().map(|x| x / n).collect())
}

/// Haar-random unit vector (normalized complex Gaussian).
pub fn random_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<C64> {
    loop {
        let v: Vec<C64> = (0..dim)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        if let Some(v) = normalized(&v) {
            return v;
        }
    }
}

/// Computational basis vector `|index⟩`.
pub fn basis_state(dim: usize, index: usize) -> Vec<C64> {
    let mut v = vec![ZERO; dim];
    v[index] = ONE;
    v
}
