//! Intensive macro observables `A = c_f⁻¹ Σ a_k` built from a few-body
//! template, their commutators, and matrix elements between product states.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    anti_hermitian_norm, embed_into, inner, kron, pauli_string, HilbertSpace, LocalOperator,
    ManyBodyOperator, C64,
};
use faer::Mat;

/// Where copies of the template are placed when forming the sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    /// Every increasing `n`-tuple of sites, `C(f, n)` terms.
    #[default]
    AllSubsets,
    /// Consecutive windows on an open chain, `f - n + 1` terms.
    NearestNeighborChain,
}

impl Placement {
    pub fn supports(&self, num_sites: usize, body_count: usize) -> Vec<Vec<usize>> {
        if body_count == 0 || body_count > num_sites {
            return Vec::new();
        }
        match self {
            Placement::AllSubsets => combinations(num_sites, body_count),
            Placement::NearestNeighborChain => (0..=num_sites - body_count)
                .map(|start| (start..start + body_count).collect())
                .collect(),
        }
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..k).collect();
    loop {
        out.push(current.clone());
        // advance the rightmost index that still has room
        let Some(pos) = (0..k).rev().find(|&i| current[i] < n - k + i) else {
            return out;
        };
        current[pos] += 1;
        for i in pos + 1..k {
            current[i] = current[i - 1] + 1;
        }
    }
}

#[derive(Clone, Debug)]
pub struct MacroObservable {
    template: LocalOperator,
    placement: Placement,
    placement_count: usize,
    normalization: f64,
    operator: ManyBodyOperator,
}

/// Builds `c_f⁻¹ Σ_placements a` with `c_f` equal to the number of placements.
pub fn build_intensive(
    template: &LocalOperator,
    space: &HilbertSpace,
    placement: Placement,
) -> Result<MacroObservable> {
    let n = template.body_count();
    let f = space.num_sites();
    if n > f {
        return Err(Error::InvalidArgument(format!(
            "{n}-body template does not fit on {f} sites"
        )));
    }
    let d = space.local_dim();
    let expected = d.pow(n as u32);
    if template.matrix().nrows() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            actual: template.matrix().nrows(),
        });
    }
    if 2 * n > f {
        tracing::warn!(body_count = n, num_sites = f, "template is not few-body for this system size");
    }
    let supports = placement.supports(f, n);
    let normalization = supports.len() as f64;
    let dim = space.dimension();
    let mut matrix = Mat::zeros(dim, dim);
    for support in supports.iter() {
        embed_into(&template.moved_to(support.clone())?, space, 1.0 / normalization, &mut matrix)?;
    }
    let operator = if template.is_hermitian() {
        ManyBodyOperator::hermitian_from(*space, matrix)?
    } else {
        ManyBodyOperator::new(*space, matrix)?
    };
    Ok(MacroObservable {
        template: template.clone(),
        placement,
        placement_count: supports.len(),
        normalization,
        operator,
    })
}

/// Intensive sum of a Pauli-string template, e.g. `"z"` for the
/// magnetization per site or `"zz"` for the pair correlation.
pub fn intensive_pauli(
    label: &str,
    space: &HilbertSpace,
    placement: Placement,
) -> Result<MacroObservable> {
    let template = LocalOperator::new((0..label.len()).collect(), pauli_string(label)?)?;
    build_intensive(&template, space, placement)
}

impl MacroObservable {
    pub fn operator(&self) -> &ManyBodyOperator {
        &self.operator
    }

    pub fn template(&self) -> &LocalOperator {
        &self.template
    }

    pub fn space(&self) -> &HilbertSpace {
        self.operator.space()
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn body_count(&self) -> usize {
        self.template.body_count()
    }

    pub fn placement(&self) -> Placement {
        self.placement
    }

    pub fn placement_count(&self) -> usize {
        self.placement_count
    }

    /// Same sum with a different prefactor `c_f⁻¹`.
    pub fn with_normalization(&self, normalization: f64) -> Result<Self> {
        if !(normalization.is_finite() && normalization > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "normalization must be positive, got {normalization}"
            )));
        }
        Ok(Self {
            operator: self.operator.scaled(self.normalization / normalization),
            normalization,
            ..self.clone()
        })
    }
}

/// Operator norm of `[A, B]`.
pub fn commutator_norm(a: &MacroObservable, b: &MacroObservable) -> Result<f64> {
    operator_commutator_norm(a.operator(), b.operator())
}

pub fn operator_commutator_norm(a: &ManyBodyOperator, b: &ManyBodyOperator) -> Result<f64> {
    let c = a.commutator(b)?;
    if a.is_hermitian() && b.is_hermitian() {
        Ok(anti_hermitian_norm(c.as_ref()))
    } else {
        Ok(crate::hilbert::matrix_norm(c.as_ref()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub num_sites: usize,
    pub norm: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingSweep {
    pub points: Vec<ScalingPoint>,
    /// Least-squares slope of `ln(norm)` against `ln(f)`; `None` when fewer
    /// than two points have a nonzero norm.
    pub slope: Option<f64>,
}

/// Norms below this are treated as exactly commuting in the slope fit.
pub const COMMUTING_THRESHOLD: f64 = 1e-12;

pub fn commutator_scaling_sweep(
    template_a: &LocalOperator,
    template_b: &LocalOperator,
    placement: Placement,
    sites: &[usize],
) -> Result<ScalingSweep> {
    if sites.is_empty() {
        return Err(Error::InvalidArgument("empty system-size range".into()));
    }
    let d = template_a
        .local_dim()
        .ok_or_else(|| Error::InvalidArgument("template size is not a power of a site dimension".into()))?;
    if template_b.local_dim() != Some(d) {
        return Err(Error::InvalidArgument("templates act on different site dimensions".into()));
    }
    let points = sites
        .par_iter()
        .map(|&f| {
            let space = HilbertSpace::new(f, d)?;
            let a = build_intensive(template_a, &space, placement)?;
            let b = build_intensive(template_b, &space, placement)?;
            Ok(ScalingPoint {
                num_sites: f,
                norm: commutator_norm(&a, &b)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let slope = log_log_slope(&points);
    Ok(ScalingSweep { points, slope })
}

pub fn log_log_slope(points: &[ScalingPoint]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|p| p.norm > COMMUTING_THRESHOLD)
        .map(|p| ((p.num_sites as f64).ln(), p.norm.ln()))
        .unzip();
    least_squares_slope(&xs, &ys)
}

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// A site-wise product state `⊗_k |φ_k⟩`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductState {
    sites: Vec<Vec<C64>>,
}

impl ProductState {
    /// Every factor must be a unit vector of the same length.
    pub fn new(sites: Vec<Vec<C64>>) -> Result<Self> {
        let Some(first) = sites.first() else {
            return Err(Error::InvalidArgument("product state needs at least one site".into()));
        };
        let d = first.len();
        for (k, site) in sites.iter().enumerate() {
            if site.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: site.len(),
                });
            }
            let norm = crate::hilbert::norm(site);
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::Precondition(format!(
                    "factor on site {k} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(Self { sites })
    }

    /// The same single-site state on every site.
    pub fn uniform(site: Vec<C64>, num_sites: usize) -> Result<Self> {
        Self::new(vec![site; num_sites])
    }

    pub fn num_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn local_dim(&self) -> usize {
        self.sites[0].len()
    }

    pub fn site(&self, k: usize) -> &[C64] {
        &self.sites[k]
    }

    /// Dense vector in the site-0-most-significant basis.
    pub fn to_vector(&self) -> Vec<C64> {
        self.sites.iter().fold(vec![C64::new(1.0, 0.0)], |acc, site| {
            acc.iter()
                .flat_map(|a| site.iter().map(move |s| a * s))
                .collect()
        })
    }

    fn cluster(&self, support: &[usize]) -> Vec<C64> {
        support.iter().fold(vec![C64::new(1.0, 0.0)], |acc, &k| {
            acc.iter()
                .flat_map(|a| self.sites[k].iter().map(move |s| a * s))
                .collect()
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OverlapReport {
    /// Exact `⟨Φ_i|A|Φ_j⟩`.
    pub value: C64,
    /// `c_f⁻¹ · #placements · τ^(N-n) · max_S |⟨φ_i^S|a|φ_j^S⟩|`.
    pub bound: f64,
    pub num_sites: usize,
    pub body_count: usize,
    /// Common per-site overlap, or the geometric mean of the spectator
    /// overlaps used in the bound when they differ.
    pub tau: f64,
    pub uniform_tau: bool,
}

/// Per-site overlaps are considered equal within this tolerance.
pub const TAU_TOL: f64 = 1e-9;

/// Matrix element of a macro observable between two product states.
///
/// When the per-site overlaps are not all equal, `allow_unequal_overlaps`
/// selects the fallback bound built from the `N - n` largest overlaps;
/// otherwise the call fails.
pub fn offdiag_overlap(
    observable: &MacroObservable,
    phi_i: &ProductState,
    phi_j: &ProductState,
    allow_unequal_overlaps: bool,
) -> Result<OverlapReport> {
    let space = observable.space();
    for phi in [phi_i, phi_j] {
        if phi.num_sites() != space.num_sites() {
            return Err(Error::DimensionMismatch {
                expected: space.num_sites(),
                actual: phi.num_sites(),
            });
        }
        if phi.local_dim() != space.local_dim() {
            return Err(Error::DimensionMismatch {
                expected: space.local_dim(),
                actual: phi.local_dim(),
            });
        }
    }
    let value = observable
        .operator()
        .matrix_element(&phi_i.to_vector(), &phi_j.to_vector())?;

    let big_n = space.num_sites();
    let n = observable.body_count();
    let spectators = big_n - n;
    let mut overlaps: Vec<f64> = (0..big_n)
        .map(|k| inner(phi_i.site(k), phi_j.site(k)).norm())
        .collect();
    let uniform_tau = overlaps.iter().all(|o| (o - overlaps[0]).abs() <= TAU_TOL);
    let (tau, spectator_factor) = if uniform_tau {
        (overlaps[0], overlaps[0].powi(spectators as i32))
    } else if allow_unequal_overlaps {
        overlaps.sort_by(|a, b| b.total_cmp(a));
        let factor: f64 = overlaps[..spectators].iter().product();
        let tau = if spectators == 0 {
            1.0
        } else {
            factor.powf(1.0 / spectators as f64)
        };
        (tau, factor)
    } else {
        return Err(Error::Precondition(
            "per-site overlaps differ; enable the unequal-overlap fallback".into(),
        ));
    };

    let template = observable.template();
    let supports = observable.placement().supports(big_n, n);
    let max_cluster = supports
        .iter()
        .map(|support| {
            let left = phi_i.cluster(support);
            let right = phi_j.cluster(support);
            let applied = crate::hilbert::mat_vec(template.matrix(), &right);
            inner(&left, &applied).norm()
        })
        .fold(0.0f64, f64::max);
    let bound = supports.len() as f64 / observable.normalization() * spectator_factor * max_cluster;

    Ok(OverlapReport {
        value,
        bound,
        num_sites: big_n,
        body_count: n,
        tau,
        uniform_tau,
    })
}

/// `|0⟩` rotated by `theta` towards `|1⟩`: `cos θ |0⟩ + sin θ |1⟩`.
pub fn tilted_qubit(theta: f64) -> Vec<C64> {
    vec![C64::new(theta.cos(), 0.0), C64::new(theta.sin(), 0.0)]
}

/// `a ⊗ b` with `b` acting on the sites following those of `a`.
pub fn tensor_template(a: &LocalOperator, b: &LocalOperator) -> Result<LocalOperator> {
    let offset = a.support().last().map_or(0, |s| s + 1);
    let support = a
        .support()
        .iter()
        .copied()
        .chain(b.support().iter().map(|s| s + offset))
        .collect();
    LocalOperator::new(support, kron(a.matrix(), b.matrix()))
}
