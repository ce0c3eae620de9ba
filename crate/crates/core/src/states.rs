//! State vectors seen through a phase-cell decomposition: cell weights,
//! coarse expectation values, and the mixture behaviour of superpositions of
//! states from different cells.

use serde::{Deserialize, Serialize};

use crate::cells::PhaseCellDecomposition;
use crate::error::{Error, Result};
use crate::hilbert::{check_len, inner, norm, normalized, C64};

/// Tolerance on `‖ψ‖ - 1` before a state is renormalized with a warning.
pub const NORMALIZATION_TOL: f64 = 1e-8;

/// Largest relative norm allowed outside the claimed cell.
pub const SUPPORT_LEAKAGE_TOL: f64 = 1e-8;

/// Slack on the two-point variance identity.
pub const VARIANCE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MacroState {
    psi: Vec<C64>,
    /// `b_Ji`, grouped by cell label.
    coefficients: Vec<Vec<C64>>,
    weights: Vec<f64>,
}

impl MacroState {
    pub fn psi(&self) -> &[C64] {
        &self.psi
    }

    pub fn coefficients(&self) -> &[Vec<C64>] {
        &self.coefficients
    }

    /// `w_J = Σ_i |b_Ji|²`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Ψ_J = Σ_i b_Ji Φ_Ji`.
    pub fn cell_component(&self, decomp: &PhaseCellDecomposition, label: usize) -> Result<Vec<C64>> {
        let basis = decomp.cell_basis(label)?;
        let b = &self.coefficients[label];
        Ok((0..basis.nrows())
            .map(|r| (0..basis.ncols()).map(|i| basis[(r, i)] * b[i]).sum())
            .collect())
    }
}

pub fn analyze(psi: &[C64], decomp: &PhaseCellDecomposition) -> Result<MacroState> {
    check_len(decomp.dimension(), psi.len())?;
    let n = norm(psi);
    let psi = if (n - 1.0).abs() > NORMALIZATION_TOL {
        tracing::warn!(norm = n, "state is not normalized; renormalizing");
        normalized(psi).ok_or_else(|| Error::InvalidArgument("zero state vector".into()))?
    } else {
        psi.to_vec()
    };
    let flat = decomp.coefficients(&psi)?;
    let coefficients: Vec<Vec<C64>> = decomp
        .cells()
        .iter()
        .map(|c| flat[c.offset..c.offset + c.dim].to_vec())
        .collect();
    let weights = coefficients
        .iter()
        .map(|b| b.iter().map(|z| z.norm_sqr()).sum())
        .collect();
    Ok(MacroState {
        psi,
        coefficients,
        weights,
    })
}

/// `Σ_J A_J w_J`.
pub fn macro_expectation(
    state: &MacroState,
    decomp: &PhaseCellDecomposition,
    index: usize,
) -> Result<f64> {
    if index >= decomp.num_observables() {
        return Err(Error::IndexOutOfRange {
            index,
            len: decomp.num_observables(),
        });
    }
    check_len(decomp.num_cells(), state.weights.len())?;
    Ok(decomp
        .cells()
        .iter()
        .zip(&state.weights)
        .map(|(c, w)| c.values[index] * w)
        .sum())
}

/// Cell a vector lives in, with the relative norm found outside it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSupport {
    pub cell: usize,
    pub leakage: f64,
}

/// Dominant cell of `v`; `None` for the zero vector.
pub fn cell_support(v: &[C64], decomp: &PhaseCellDecomposition) -> Result<Option<CellSupport>> {
    let total = norm(v);
    if total == 0.0 {
        return Ok(None);
    }
    let b = decomp.coefficients(v)?;
    let weights: Vec<f64> = decomp
        .cells()
        .iter()
        .map(|c| b[c.offset..c.offset + c.dim].iter().map(|z| z.norm_sqr()).sum())
        .collect();
    let (cell, &max) = weights
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("decomposition has at least one cell");
    let outside: f64 = weights.iter().sum::<f64>() - max;
    Ok(Some(CellSupport {
        cell,
        leakage: outside.max(0.0).sqrt() / total,
    }))
}

fn require_cell(v: &[C64], decomp: &PhaseCellDecomposition, name: &str) -> Result<Option<CellSupport>> {
    let support = cell_support(v, decomp)?;
    if let Some(s) = support {
        if s.leakage > SUPPORT_LEAKAGE_TOL {
            return Err(Error::Precondition(format!(
                "{name} is not supported in a single cell (leakage {:.3e} outside cell {})",
                s.leakage, s.cell
            )));
        }
    }
    Ok(support)
}

/// `⟨ψ|Ā|ψ⟩` for an arbitrary (not necessarily normalized) vector.
fn coarse_quadratic_form(psi: &[C64], decomp: &PhaseCellDecomposition, index: usize) -> Result<f64> {
    let applied = decomp.apply_coarse(index, psi)?;
    Ok(inner(psi, &applied).re)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MixtureReport {
    /// `⟨Ψ|Ā|Ψ⟩` with `Ψ = φ₁ + φ₂` unnormalized.
    pub lhs: f64,
    /// `⟨φ₁|Ā|φ₁⟩ + ⟨φ₂|Ā|φ₂⟩`.
    pub rhs: f64,
    /// `A_J Σ_i |b_Ji|²` of `Ψ` for every cell.
    pub cell_terms: Vec<f64>,
    pub max_abs_discrepancy: f64,
    pub cells: [Option<usize>; 2],
    pub normalized: NormalizedMixture,
}

/// Same comparison for `Ψ/‖Ψ‖` against the weighted average of the parts.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NormalizedMixture {
    pub lhs: f64,
    pub rhs: f64,
    pub discrepancy: f64,
}

pub fn mixture_test(
    phi1: &[C64],
    phi2: &[C64],
    decomp: &PhaseCellDecomposition,
    index: usize,
) -> Result<MixtureReport> {
    check_len(decomp.dimension(), phi1.len())?;
    check_len(decomp.dimension(), phi2.len())?;
    let c1 = require_cell(phi1, decomp, "phi1")?;
    let c2 = require_cell(phi2, decomp, "phi2")?;
    match (c1, c2) {
        (None, None) => {
            return Err(Error::Precondition("both states are zero".into()));
        }
        (Some(a), Some(b)) if a.cell == b.cell => {
            return Err(Error::Precondition(format!(
                "both states lie in cell {}; a mixture test needs distinct cells",
                a.cell
            )));
        }
        _ => {}
    }

    let psi: Vec<C64> = phi1.iter().zip(phi2).map(|(a, b)| a + b).collect();
    let lhs = coarse_quadratic_form(&psi, decomp, index)?;
    let rhs = coarse_quadratic_form(phi1, decomp, index)? + coarse_quadratic_form(phi2, decomp, index)?;

    let b = decomp.coefficients(&psi)?;
    let cell_terms = decomp
        .cells()
        .iter()
        .map(|c| c.values[index] * b[c.offset..c.offset + c.dim].iter().map(|z| z.norm_sqr()).sum::<f64>())
        .collect();

    let psi_norm_sqr = norm(&psi).powi(2);
    let parts_norm_sqr = norm(phi1).powi(2) + norm(phi2).powi(2);
    let normalized_lhs = lhs / psi_norm_sqr;
    let normalized_rhs = rhs / parts_norm_sqr;
    Ok(MixtureReport {
        lhs,
        rhs,
        cell_terms,
        max_abs_discrepancy: (lhs - rhs).abs(),
        cells: [c1.map(|s| s.cell), c2.map(|s| s.cell)],
        normalized: NormalizedMixture {
            lhs: normalized_lhs,
            rhs: normalized_rhs,
            discrepancy: (normalized_lhs - normalized_rhs).abs(),
        },
    })
}

/// `⟨Ā²⟩ - ⟨Ā⟩²` in `ψ/‖ψ‖`.
pub fn coarse_variance(psi: &[C64], decomp: &PhaseCellDecomposition, index: usize) -> Result<f64> {
    let psi = normalized(psi).ok_or_else(|| Error::InvalidArgument("zero state vector".into()))?;
    let applied = decomp.apply_coarse(index, &psi)?;
    let mean = inner(&psi, &applied).re;
    let second = norm(&applied).powi(2);
    Ok((second - mean * mean).max(0.0))
}

/// Variance of observable `index` in the normalized `α φ₁ + β φ₂`.
pub fn superposition_variance(
    alpha: C64,
    phi1: &[C64],
    beta: C64,
    phi2: &[C64],
    decomp: &PhaseCellDecomposition,
    index: usize,
) -> Result<f64> {
    check_len(phi1.len(), phi2.len())?;
    let psi: Vec<C64> = phi1.iter().zip(phi2).map(|(a, b)| alpha * a + beta * b).collect();
    coarse_variance(&psi, decomp, index)
}

/// A unit vector counts as a macro state when every coarse observable has
/// variance at most `(residual + δ/2)²`.
pub fn is_macro_state(psi: &[C64], decomp: &PhaseCellDecomposition) -> Result<bool> {
    for index in 0..decomp.num_observables() {
        let allowed = decomp.residual(index)? + 0.5 * decomp.resolutions()[index].delta();
        if coarse_variance(psi, decomp, index)? > allowed * allowed {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    NotAMacroState,
    MacroState,
    /// The two cells share every observable value.
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AmbiguityReport {
    pub verdict: Verdict,
    pub cells: [usize; 2],
    /// Observable with the largest value gap between the two cells.
    pub discriminating_observable: Option<usize>,
    /// Coarse variances of `(φ₁ + φ₂)/‖φ₁ + φ₂‖`, one per observable.
    pub variances: Vec<f64>,
    /// `(A₁ - A₂)²/4` for the discriminating observable.
    pub expected_variance: Option<f64>,
    /// Variances of `(φ₁ - φ₂)/√2` and `(φ₁ + φ₂)/√2`, one pair per observable.
    pub rotated_variances: Vec<[f64; 2]>,
    /// Both rotated vectors have the same nonzero variance for the
    /// discriminating observable and neither is a macro state.
    pub rotated_pair_certified: bool,
}

pub fn basis_ambiguity_test(
    phi1: &[C64],
    phi2: &[C64],
    decomp: &PhaseCellDecomposition,
) -> Result<AmbiguityReport> {
    check_len(decomp.dimension(), phi1.len())?;
    check_len(decomp.dimension(), phi2.len())?;
    let c1 = require_cell(phi1, decomp, "phi1")?
        .ok_or_else(|| Error::Precondition("phi1 is zero".into()))?
        .cell;
    let c2 = require_cell(phi2, decomp, "phi2")?
        .ok_or_else(|| Error::Precondition("phi2 is zero".into()))?
        .cell;

    let m = decomp.num_observables();
    let sum: Vec<C64> = phi1.iter().zip(phi2).map(|(a, b)| a + b).collect();
    let variances = (0..m)
        .map(|k| coarse_variance(&sum, decomp, k))
        .collect::<Result<Vec<_>>>()?;
    let sum_is_macro = is_macro_state(&sum, decomp)?;

    let minus: Vec<C64> = phi1.iter().zip(phi2).map(|(a, b)| a - b).collect();
    let rotated: [Option<Vec<C64>>; 2] = [normalized(&minus), normalized(&sum)];
    let rotated_variances = (0..m)
        .map(|k| {
            let var = |v: &Option<Vec<C64>>| v.as_ref().map_or(Ok(0.0), |v| coarse_variance(v, decomp, k));
            Ok([var(&rotated[0])?, var(&rotated[1])?])
        })
        .collect::<Result<Vec<_>>>()?;

    let values1 = &decomp.cells()[c1].values;
    let values2 = &decomp.cells()[c2].values;
    let (disc, gap) = values1
        .iter()
        .zip(values2)
        .map(|(a, b)| (a - b).abs())
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one observable");

    if c1 == c2 {
        let verdict = if sum_is_macro {
            Verdict::MacroState
        } else {
            Verdict::NotAMacroState
        };
        return Ok(AmbiguityReport {
            verdict,
            cells: [c1, c2],
            discriminating_observable: None,
            variances,
            expected_variance: None,
            rotated_variances,
            rotated_pair_certified: false,
        });
    }
    if gap <= 1e-12 {
        return Ok(AmbiguityReport {
            verdict: Verdict::Inconclusive,
            cells: [c1, c2],
            discriminating_observable: None,
            variances,
            expected_variance: None,
            rotated_variances,
            rotated_pair_certified: false,
        });
    }

    let expected = gap * gap / 4.0;
    let verdict = if variances[disc] >= expected - VARIANCE_TOL && !sum_is_macro {
        Verdict::NotAMacroState
    } else {
        Verdict::MacroState
    };
    let [v_minus, v_plus] = rotated_variances[disc];
    let both_fail = rotated
        .iter()
        .map(|v| v.as_ref().map_or(Ok(true), |v| is_macro_state(v, decomp)))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .all(|is_macro| !is_macro);
    let rotated_pair_certified =
        (v_minus - v_plus).abs() <= VARIANCE_TOL && v_plus > VARIANCE_TOL && both_fail;

    Ok(AmbiguityReport {
        verdict,
        cells: [c1, c2],
        discriminating_observable: Some(disc),
        variances,
        expected_variance: Some(expected),
        rotated_variances,
        rotated_pair_certified,
    })
}
