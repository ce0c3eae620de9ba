//! Phase cells: joint approximate eigenspaces of a family of macro
//! observables at a finite resolution, and the exactly commuting coarse
//! observables `Ā = Σ_J A_J P_J` they define.
//!
//! Construction is sequential bin-and-refine. The first observable is
//! diagonalized exactly and its spectrum cut into windows of width `δ₁`
//! anchored at the spectrum minimum. Inside each non-empty window the next
//! observable is compressed onto the window's eigenvectors, diagonalized, and
//! binned with `δ₂`, and so on through the list. The representative value of a
//! window is the mean of the eigenvalues it contains.
//!
//! Degenerate eigenspaces are returned in whatever basis the eigensolver
//! picks. Labels, values and cell dimensions do not depend on that choice;
//! individual basis vectors do.

use faer::{Mat, MatRef};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    adjoint_mat_vec, check_len, diagonalize_matrix, hermitian_part, identity_deviation, mat_vec, max_abs,
    HilbertSpace, ManyBodyOperator, C64,
};
use crate::observables::MacroObservable;

/// Format version written to decomposition documents.
pub const SCHEMA_VERSION: u32 = 1;

/// Relative shift applied to window boundaries so that eigenvalues sitting
/// on a boundary land in the lower window deterministically.
const BOUNDARY_SHIFT: f64 = 1e-12;

/// Macroscopic resolution `ΔA` of one observable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CellResolution(f64);

impl CellResolution {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "resolution must be positive and finite, got {delta}"
            )));
        }
        Ok(Self(delta))
    }

    pub fn delta(&self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for CellResolution {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<CellResolution> for f64 {
    fn from(value: CellResolution) -> f64 {
        value.0
    }
}

/// Anything that can be fed to [`decompose`].
pub trait Observable {
    fn operator(&self) -> &ManyBodyOperator;
}

impl Observable for ManyBodyOperator {
    fn operator(&self) -> &ManyBodyOperator {
        self
    }
}

impl Observable for MacroObservable {
    fn operator(&self) -> &ManyBodyOperator {
        MacroObservable::operator(self)
    }
}

impl<T: Observable + ?Sized> Observable for &T {
    fn operator(&self) -> &ManyBodyOperator {
        (**self).operator()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub label: usize,
    /// One representative value per observable, in input order.
    pub values: Vec<f64>,
    pub dim: usize,
    /// First column of this cell in the total basis.
    pub offset: usize,
}

#[derive(Clone, Debug)]
pub struct PhaseCellDecomposition {
    space: HilbertSpace,
    observables: Vec<ManyBodyOperator>,
    resolutions: Vec<CellResolution>,
    order: Vec<usize>,
    cells: Vec<PhaseCell>,
    total_basis: Mat<C64>,
    residuals: Vec<f64>,
}

/// Decomposes with observables refined in input order.
pub fn decompose<O: Observable>(
    observables: &[O],
    resolutions: &[CellResolution],
) -> Result<PhaseCellDecomposition> {
    let order: Vec<usize> = (0..observables.len()).collect();
    decompose_in_order(observables, resolutions, &order)
}

/// Decomposes refining observables in the sequence given by `order`.
/// Cell value tuples stay indexed by input position.
pub fn decompose_in_order<O: Observable>(
    observables: &[O],
    resolutions: &[CellResolution],
    order: &[usize],
) -> Result<PhaseCellDecomposition> {
    let Some(first) = observables.first() else {
        return Err(Error::InvalidArgument("no observables to decompose".into()));
    };
    if observables.len() != resolutions.len() {
        return Err(Error::InvalidArgument(format!(
            "{} observables but {} resolutions",
            observables.len(),
            resolutions.len()
        )));
    }
    let mut seen = vec![false; observables.len()];
    if order.len() != observables.len()
        || order.iter().any(|&i| i >= seen.len() || std::mem::replace(&mut seen[i], true))
    {
        return Err(Error::InvalidArgument(format!(
            "order {order:?} is not a permutation of the observables"
        )));
    }
    let space = *first.operator().space();
    for obs in observables {
        let op = obs.operator();
        if op.space() != &space {
            return Err(Error::SpaceMismatch);
        }
        if !op.is_hermitian() {
            return Err(Error::NotHermitian {
                deviation: crate::hilbert::hermitian_deviation(op.matrix()),
            });
        }
    }

    let m = observables.len();
    let mut blocks = vec![Block {
        basis: None,
        values: vec![f64::NAN; m],
    }];
    for (level, &index) in order.iter().enumerate() {
        let op = observables[index].operator().matrix();
        let delta = resolutions[index].delta();
        let refined: Vec<Result<Vec<Block>>> = blocks
            .par_iter()
            .map(|block| block.refine(op, index, delta, level == 0))
            .collect();
        blocks = refined
            .into_iter()
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
    }

    blocks.sort_by(|a, b| {
        a.values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let dim = space.dimension();
    let mut total_basis = Mat::zeros(dim, dim);
    let mut cells = Vec::with_capacity(blocks.len());
    let mut offset = 0;
    for (label, block) in blocks.into_iter().enumerate() {
        let basis = block.basis.expect("every block is refined at least once");
        for j in 0..basis.ncols() {
            for i in 0..dim {
                total_basis[(i, offset + j)] = basis[(i, j)];
            }
        }
        cells.push(PhaseCell {
            label,
            values: block.values,
            dim: basis.ncols(),
            offset,
        });
        offset += basis.ncols();
    }
    debug_assert_eq!(offset, dim);

    let mut decomposition = PhaseCellDecomposition {
        space,
        observables: observables.iter().map(|o| o.operator().clone()).collect(),
        resolutions: resolutions.to_vec(),
        order: order.to_vec(),
        cells,
        total_basis,
        residuals: Vec::new(),
    };
    decomposition.residuals = (0..m)
        .into_par_iter()
        .map(|index| decomposition.compute_residual(index))
        .collect();
    Ok(decomposition)
}

struct Block {
    /// Orthonormal columns spanning the block; `None` means the whole space.
    basis: Option<Mat<C64>>,
    values: Vec<f64>,
}

impl Block {
    fn refine(
        &self,
        op: MatRef<'_, C64>,
        index: usize,
        delta: f64,
        warn_on_fine_resolution: bool,
    ) -> Result<Vec<Block>> {
        let compressed = match &self.basis {
            None => hermitian_part(op),
            Some(v) => hermitian_part((v.adjoint() * op * v).as_ref()),
        };
        let spectral = diagonalize_matrix(compressed.as_ref())?;
        let eigenvalues = spectral.eigenvalues();
        if warn_on_fine_resolution {
            if let Some(scale) = spacing_scale(eigenvalues) {
                if delta < scale {
                    tracing::warn!(
                        delta,
                        spacing = scale,
                        "resolution is below the typical level spacing; cells are close to exact eigenspaces"
                    );
                }
            }
        }
        let local = spectral.eigenvectors();
        let blocks = bin_sorted(eigenvalues, delta)
            .into_iter()
            .map(|range| {
                let cols = local.subcols(range.start, range.len());
                let basis = match &self.basis {
                    None => cols.to_owned(),
                    Some(v) => v * cols,
                };
                let mut values = self.values.clone();
                values[index] = eigenvalues[range.clone()].iter().sum::<f64>() / range.len() as f64;
                Block {
                    basis: Some(basis),
                    values,
                }
            })
            .collect();
        Ok(blocks)
    }
}

/// Splits an ascending spectrum into fixed-width windows anchored at its
/// minimum; empty windows are dropped. Values on a boundary go to the lower
/// window.
pub fn bin_sorted(eigenvalues: &[f64], delta: f64) -> Vec<std::ops::Range<usize>> {
    let Some(&min) = eigenvalues.first() else {
        return Vec::new();
    };
    let window = |e: f64| -> i64 {
        let x = (e - min) / delta;
        ((x - BOUNDARY_SHIFT).ceil() as i64 - 1).max(0)
    };
    let mut ranges = Vec::new();
    let mut start = 0;
    for i in 1..eigenvalues.len() {
        if window(eigenvalues[i]) != window(eigenvalues[start]) {
            ranges.push(start..i);
            start = i;
        }
    }
    ranges.push(start..eigenvalues.len());
    ranges
}

/// Median gap between distinct neighbouring eigenvalues, if any.
pub fn spacing_scale(eigenvalues: &[f64]) -> Option<f64> {
    let span = eigenvalues.last()? - eigenvalues.first()?;
    let tol = 1e-9 * span.abs().max(1.0);
    let mut gaps: Vec<f64> = eigenvalues
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&g| g > tol)
        .collect();
    if gaps.is_empty() {
        return None;
    }
    gaps.sort_by(f64::total_cmp);
    Some(gaps[gaps.len() / 2])
}

impl PhaseCellDecomposition {
    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn dimension(&self) -> usize {
        self.space.dimension()
    }

    pub fn cells(&self) -> &[PhaseCell] {
        &self.cells
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_observables(&self) -> usize {
        self.observables.len()
    }

    pub fn observables(&self) -> &[ManyBodyOperator] {
        &self.observables
    }

    pub fn resolutions(&self) -> &[CellResolution] {
        &self.resolutions
    }

    /// Refinement order used to build the cells.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn cell(&self, label: usize) -> Result<&PhaseCell> {
        self.cells.get(label).ok_or(Error::IndexOutOfRange {
            index: label,
            len: self.cells.len(),
        })
    }

    /// All `Φ_Ji` as columns, grouped by cell in label order.
    pub fn total_basis(&self) -> MatRef<'_, C64> {
        self.total_basis.as_ref()
    }

    pub fn cell_basis(&self, label: usize) -> Result<MatRef<'_, C64>> {
        let cell = self.cell(label)?;
        Ok(self.total_basis.as_ref().subcols(cell.offset, cell.dim))
    }

    /// `Φ_Ji` as a vector.
    pub fn basis_vector(&self, label: usize, i: usize) -> Result<Vec<C64>> {
        let basis = self.cell_basis(label)?;
        if i >= basis.ncols() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: basis.ncols(),
            });
        }
        Ok((0..basis.nrows()).map(|r| basis[(r, i)]).collect())
    }

    /// Cell containing column `column` of the total basis.
    pub fn cell_of_column(&self, column: usize) -> usize {
        self.cells
            .partition_point(|c| c.offset + c.dim <= column)
    }

    /// `P_J = Σ_i |Φ_Ji⟩⟨Φ_Ji|`.
    pub fn projector(&self, label: usize) -> Result<ManyBodyOperator> {
        let basis = self.cell_basis(label)?;
        ManyBodyOperator::hermitian_from(self.space, basis * basis.adjoint())
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.observables.len() {
            return Err(Error::IndexOutOfRange {
                index,
                len: self.observables.len(),
            });
        }
        Ok(())
    }

    /// Representative value of observable `index` for every basis column.
    fn column_values(&self, index: usize) -> Vec<f64> {
        self.cells
            .iter()
            .flat_map(|c| std::iter::repeat(c.values[index]).take(c.dim))
            .collect()
    }

    /// `Ā = Σ_J A_J P_J`.
    pub fn coarse_observable(&self, index: usize) -> Result<ManyBodyOperator> {
        self.check_index(index)?;
        let values = self.column_values(index);
        let v = self.total_basis.as_ref();
        let scaled = Mat::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * values[j]);
        ManyBodyOperator::hermitian_from(self.space, &scaled * v.adjoint())
    }

    /// `Ā ψ` without forming `Ā`.
    pub fn apply_coarse(&self, index: usize, psi: &[C64]) -> Result<Vec<C64>> {
        self.check_index(index)?;
        let values = self.column_values(index);
        let mut coefficients = self.coefficients(psi)?;
        for (b, a) in coefficients.iter_mut().zip(&values) {
            *b *= *a;
        }
        Ok(mat_vec(self.total_basis.as_ref(), &coefficients))
    }

    /// `b_Ji = ⟨Φ_Ji|ψ⟩` in total-basis column order.
    pub fn coefficients(&self, psi: &[C64]) -> Result<Vec<C64>> {
        check_len(self.dimension(), psi.len())?;
        Ok(adjoint_mat_vec(self.total_basis.as_ref(), psi))
    }

    /// `max_{J,i} ‖(A - A_J) Φ_Ji‖₂` for observable `index`.
    pub fn residual(&self, index: usize) -> Result<f64> {
        self.check_index(index)?;
        Ok(self.residuals[index])
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    fn compute_residual(&self, index: usize) -> f64 {
        let v = self.total_basis.as_ref();
        let av = self.observables[index].matrix() * v;
        let values = self.column_values(index);
        (0..v.ncols())
            .map(|j| {
                (0..v.nrows())
                    .map(|i| (av[(i, j)] - v[(i, j)] * values[j]).norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// `‖Σ_J P_J - 1‖_maxabs`, i.e. `‖V V† - 1‖`.
    pub fn completeness_error(&self) -> f64 {
        let v = self.total_basis.as_ref();
        identity_deviation((v * v.adjoint()).as_ref())
    }

    /// `‖V† V - 1‖_maxabs`.
    pub fn orthonormality_error(&self) -> f64 {
        let v = self.total_basis.as_ref();
        identity_deviation((v.adjoint() * v).as_ref())
    }

    /// `max_{J≠J'} ‖P_J P_J'‖_maxabs` from explicit products. Quadratic in the
    /// number of cells, each product cubic in the dimension.
    pub fn orthogonality_error(&self) -> Result<f64> {
        let projectors: Vec<ManyBodyOperator> = (0..self.num_cells())
            .map(|j| self.projector(j))
            .collect::<Result<_>>()?;
        let pairs: Vec<(usize, usize)> = (0..projectors.len())
            .flat_map(|a| (0..projectors.len()).filter(move |&b| b != a).map(move |b| (a, b)))
            .collect();
        Ok(pairs
            .par_iter()
            .map(|&(a, b)| max_abs((projectors[a].matrix() * projectors[b].matrix()).as_ref()))
            .reduce(|| 0.0, f64::max))
    }

    /// Upper bound on `max_{J≠J'} ‖P_J P_J'‖_maxabs` from the Gram matrix
    /// `G = V†V`: `‖P_J P_J'‖ ≤ ‖V_J‖ ‖G_JJ'‖_F ‖V_J'‖` with
    /// `‖V_J‖² ≤ 1 + ‖G_JJ - 1‖_F`. One product instead of one per pair.
    pub fn orthogonality_bound(&self) -> f64 {
        let v = self.total_basis.as_ref();
        let gram = v.adjoint() * v;
        let block = |a: &PhaseCell, b: &PhaseCell, subtract_identity: bool| -> f64 {
            let mut sum = 0.0;
            for j in 0..b.dim {
                for i in 0..a.dim {
                    let mut g = gram[(a.offset + i, b.offset + j)];
                    if subtract_identity && i == j {
                        g -= C64::new(1.0, 0.0);
                    }
                    sum += g.norm_sqr();
                }
            }
            sum.sqrt()
        };
        let scale: Vec<f64> = self
            .cells
            .iter()
            .map(|c| (1.0 + block(c, c, true)).sqrt())
            .collect();
        let mut out = 0.0f64;
        for (a, ca) in self.cells.iter().enumerate() {
            for (b, cb) in self.cells.iter().enumerate() {
                if a != b {
                    out = out.max(scale[a] * block(ca, cb, false) * scale[b]);
                }
            }
        }
        out
    }

    /// True when every pair of cells differs by at least the resolution in
    /// at least one observable.
    pub fn is_discernible(&self) -> bool {
        self.cells.iter().enumerate().all(|(a, ca)| {
            self.cells[a + 1..].iter().all(|cb| {
                ca.values
                    .iter()
                    .zip(&cb.values)
                    .zip(&self.resolutions)
                    .any(|((x, y), r)| (x - y).abs() >= r.delta() * (1.0 - 1e-9))
            })
        })
    }

    pub fn to_document(&self, include_basis: bool) -> DecompositionDocument {
        let cells = self
            .cells
            .iter()
            .map(|cell| CellDocument {
                label: cell.label,
                values: cell.values.clone(),
                dim: cell.dim,
                basis: include_basis.then(|| {
                    (0..cell.dim)
                        .map(|i| {
                            (0..self.dimension())
                                .flat_map(|r| {
                                    let z = self.total_basis[(r, cell.offset + i)];
                                    [z.re, z.im]
                                })
                                .collect()
                        })
                        .collect()
                }),
            })
            .collect();
        DecompositionDocument {
            schema_version: SCHEMA_VERSION,
            num_sites: self.space.num_sites(),
            local_dim: self.space.local_dim(),
            dimension: self.dimension(),
            resolutions: self.resolutions.iter().map(|r| r.delta()).collect(),
            order: self.order.clone(),
            residuals: self.residuals.clone(),
            cells,
        }
    }
}

/// Serialized form of a decomposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionDocument {
    pub schema_version: u32,
    pub num_sites: usize,
    pub local_dim: usize,
    pub dimension: usize,
    pub resolutions: Vec<f64>,
    pub order: Vec<usize>,
    pub residuals: Vec<f64>,
    pub cells: Vec<CellDocument>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellDocument {
    pub label: usize,
    pub values: Vec<f64>,
    pub dim: usize,
    /// Basis vectors as interleaved `[re, im, re, im, ...]` arrays.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<Vec<f64>>>,
}

impl DecompositionDocument {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self =
            serde_json::from_str(text).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported schema version {}",
                doc.schema_version
            )));
        }
        Ok(doc)
    }
}

/// Cell structure obtained for each refinement order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrderingReport {
    pub orders: Vec<Vec<usize>>,
    pub cell_counts: Vec<usize>,
    /// Whether every order produced the same sorted `(values, D_J)` list
    /// within `tolerance`.
    pub identical: bool,
    pub tolerance: f64,
}

pub fn compare_orderings<O: Observable>(
    observables: &[O],
    resolutions: &[CellResolution],
    orders: &[Vec<usize>],
    tolerance: f64,
) -> Result<OrderingReport> {
    let decompositions = orders
        .iter()
        .map(|order| decompose_in_order(observables, resolutions, order))
        .collect::<Result<Vec<_>>>()?;
    let same = |a: &PhaseCellDecomposition, b: &PhaseCellDecomposition| {
        a.num_cells() == b.num_cells()
            && a.cells.iter().zip(&b.cells).all(|(x, y)| {
                x.dim == y.dim
                    && x.values
                        .iter()
                        .zip(&y.values)
                        .all(|(u, v)| (u - v).abs() <= tolerance)
            })
    };
    let identical = decompositions
        .windows(2)
        .all(|w| same(&w[0], &w[1]));
    Ok(OrderingReport {
        orders: orders.to_vec(),
        cell_counts: decompositions.iter().map(|d| d.num_cells()).collect(),
        identical,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::{intensive_pauli, operator_commutator_norm, Placement};

    fn res(delta: f64) -> CellResolution {
        CellResolution::new(delta).unwrap()
    }

    fn magnetization(f: usize) -> MacroObservable {
        intensive_pauli("z", &HilbertSpace::qubits(f).unwrap(), Placement::AllSubsets).unwrap()
    }

    #[test]
    fn binning_rules() {
        assert_eq!(bin_sorted(&[-1.0, 0.0, 0.0, 1.0], 0.5), vec![0..1, 1..3, 3..4]);
        // boundary values go to the lower window
        assert_eq!(bin_sorted(&[0.0, 1.0, 1.5, 2.0], 1.0), vec![0..2, 2..4]);
        assert_eq!(bin_sorted(&[0.0, 1.0 + 1e-15], 1.0), vec![0..2]);
        assert_eq!(bin_sorted(&[0.0, 1.0, 2.0], 10.0), vec![0..3]);
        assert!(bin_sorted(&[], 1.0).is_empty());
    }

    #[test]
    fn resolution_must_be_positive() {
        assert!(CellResolution::new(0.0).is_err());
        assert!(CellResolution::new(-1.0).is_err());
        assert!(CellResolution::new(f64::NAN).is_err());
        assert!(serde_json::from_str::<CellResolution>("-0.5").is_err());
    }

    #[test]
    fn magnetization_cells_on_two_sites() {
        let d = decompose(&[magnetization(2)], &[res(0.5)]).unwrap();
        let dims: Vec<usize> = d.cells().iter().map(|c| c.dim).collect();
        let values: Vec<f64> = d.cells().iter().map(|c| c.values[0]).collect();
        assert_eq!(dims, vec![1, 2, 1]);
        for (v, e) in values.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((v - e).abs() < 1e-12);
        }
        assert!(d.residual(0).unwrap() < 1e-9);
        assert!(d.is_discernible());
        let coarse = d.coarse_observable(0).unwrap();
        assert!(max_abs((coarse.matrix() - magnetization(2).operator().matrix()).as_ref()) < 1e-12);
    }

    #[test]
    fn coarse_resolution_gives_one_cell() {
        let space = HilbertSpace::qubits(3).unwrap();
        let diag = Mat::from_fn(8, 8, |i, j| {
            if i == j {
                C64::new((i + 1) as f64 / 8.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let op = ManyBodyOperator::new(space, diag).unwrap();
        let d = decompose(&[&op], &[res(5.0)]).unwrap();
        assert_eq!(d.num_cells(), 1);
        assert_eq!(d.cells()[0].dim, 8);
        let mean = d.cells()[0].values[0];
        assert!((mean - 4.5 / 8.0).abs() < 1e-12);
        let coarse = d.coarse_observable(0).unwrap();
        let expected = ManyBodyOperator::identity(space).scaled(mean);
        assert!(max_abs((coarse.matrix() - expected.matrix()).as_ref()) < 1e-12);
        assert!(d.residual(0).unwrap() <= 5.0);
    }

    #[test]
    fn function_of_observable_refines_nothing() {
        let mz = magnetization(3);
        let mz2 = ManyBodyOperator::hermitian_from(
            *mz.space(),
            mz.operator().product(mz.operator()).unwrap(),
        )
        .unwrap();
        let single = decompose(&[mz.operator()], &[res(0.4)]).unwrap();
        let joint = decompose(&[mz.operator(), &mz2], &[res(0.4), res(0.4)]).unwrap();
        assert_eq!(single.num_cells(), 4);
        assert_eq!(joint.num_cells(), 4);
        for (a, b) in single.cells().iter().zip(joint.cells()) {
            assert_eq!(a.dim, b.dim);
            assert!((a.values[0] - b.values[0]).abs() < 1e-12);
            assert!((b.values[1] - b.values[0] * b.values[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn coarse_pair_commutes_exactly() {
        let space = HilbertSpace::qubits(4).unwrap();
        let mz = intensive_pauli("z", &space, Placement::AllSubsets).unwrap();
        let mx = intensive_pauli("x", &space, Placement::AllSubsets).unwrap();
        let d = decompose(&[&mz, &mx], &[res(0.3), res(0.3)]).unwrap();
        let az = d.coarse_observable(0).unwrap();
        let ax = d.coarse_observable(1).unwrap();
        assert!(operator_commutator_norm(&az, &ax).unwrap() <= 1e-10);
        assert!((operator_commutator_norm(mz.operator(), mx.operator()).unwrap() - 0.5).abs() < 1e-12);
        assert!(d.completeness_error() < 1e-9);
        assert!(d.orthogonality_error().unwrap() < 1e-9);
        assert!(d.orthogonality_bound() < 1e-9);
        assert!(d.residual(0).unwrap() <= 0.3);
    }

    #[test]
    fn projectors_are_idempotent_with_trace_dim() {
        let d = decompose(&[magnetization(4)], &[res(0.3)]).unwrap();
        for cell in d.cells() {
            let p = d.projector(cell.label).unwrap();
            let p2 = p.product(&p).unwrap();
            assert!(max_abs((p2 - p.matrix()).as_ref()) < 1e-9);
            let trace: f64 = (0..p.dimension()).map(|i| p.matrix()[(i, i)].re).sum();
            assert!((trace - cell.dim as f64).abs() < 1e-8);
        }
        assert_eq!(d.cell_of_column(0), 0);
        assert_eq!(d.cell_of_column(1), 1);
        assert_eq!(d.cell_of_column(15), 4);
    }

    #[test]
    fn decompose_errors() {
        let empty: [ManyBodyOperator; 0] = [];
        assert!(decompose(&empty, &[]).is_err());
        let mz = magnetization(2);
        assert!(decompose(&[&mz], &[res(0.1), res(0.1)]).is_err());
        assert!(decompose_in_order(&[&mz, &mz], &[res(0.1), res(0.1)], &[0, 0]).is_err());
        let other = magnetization(3);
        assert!(matches!(
            decompose(&[&mz, &other], &[res(0.1), res(0.1)]),
            Err(Error::SpaceMismatch)
        ));
        let d = decompose(&[&mz], &[res(0.1)]).unwrap();
        assert!(d.coarse_observable(1).is_err());
        assert!(d.residual(3).is_err());
        assert!(d.cell(9).is_err());
    }

    #[test]
    fn document_round_trip() {
        let d = decompose(&[magnetization(2)], &[res(0.5)]).unwrap();
        let doc = d.to_document(true);
        let parsed = DecompositionDocument::from_json(&doc.to_json().unwrap()).unwrap();
        assert_eq!(parsed, doc);
        assert_eq!(parsed.cells[1].basis.as_ref().unwrap()[0].len(), 8);
        let summary = d.to_document(false).to_json().unwrap();
        assert!(!summary.contains("basis"));
        assert!(summary.contains("\"schema_version\": 1"));
        let bumped = summary.replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(DecompositionDocument::from_json(&bumped).is_err());
    }

    #[test]
    fn ordering_of_commuting_family_does_not_matter() {
        let mz = magnetization(3);
        let mz2 = ManyBodyOperator::hermitian_from(
            *mz.space(),
            mz.operator().product(mz.operator()).unwrap(),
        )
        .unwrap();
        let obs = [mz.operator(), &mz2];
        let report = compare_orderings(
            &obs,
            &[res(0.4), res(0.4)],
            &[vec![0, 1], vec![1, 0]],
            1e-9,
        )
        .unwrap();
        // M_z² lumps ±m together, so refining it first then M_z still
        // separates the same four cells.
        assert_eq!(report.cell_counts, vec![4, 4]);
        assert!(report.identical);
    }
}
