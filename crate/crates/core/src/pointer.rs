//! A pointer made of N free particles in one dimension, each a Gaussian
//! packet, with the measurement outcome encoded in the collective momentum.
//!
//! Packet wavefunction:
//!
//! ```text
//! g(x) = (2πσ²)^{-1/4} exp(-(x - x₀)²/(4σ²) + i p₀ (x - x₀)/ħ)
//! ```
//!
//! Free evolution moves `x₀` with velocity `p₀/m` and widens `σ` by the
//! free-particle factor. The width stays real (no chirp), so every matrix
//! element below is a closed-form Gaussian integral:
//!
//! ```text
//! conj(g₁) g₂ = N₁N₂ exp(-αx² + βx + γ)
//! α = 1/(4σ₁²) + 1/(4σ₂²)
//! β = a/(2σ₁²) + b/(2σ₂²) + i(k₂ - k₁)
//! γ = -a²/(4σ₁²) - b²/(4σ₂²) + i(k₁a - k₂b)
//! ∫ exp(-αx² + βx + γ) dx = √(π/α) exp(β²/(4α) + γ)
//! ```
//!
//! with `a, b` the centres and `k = p₀/ħ`. Moments follow from
//! `⟨x⟩ = β/(2α)` and `⟨x²⟩ = β²/(4α²) + 1/(2α)` relative to the overlap.

use serde::{Deserialize, Serialize};

use crate::cells::bin_sorted;
use crate::error::{Error, Result};
use crate::hilbert::C64;

/// Relative tolerance for "same ħ".
const HBAR_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPacket {
    pub x0: f64,
    pub p0: f64,
    pub sigma: f64,
    pub mass: f64,
    pub hbar: f64,
}

impl GaussianPacket {
    pub fn new(x0: f64, p0: f64, sigma: f64, mass: f64, hbar: f64) -> Result<Self> {
        let packet = Self {
            x0,
            p0,
            sigma,
            mass,
            hbar,
        };
        packet.validate()?;
        Ok(packet)
    }

    fn validate(&self) -> Result<()> {
        if !(self.x0.is_finite() && self.p0.is_finite()) {
            return Err(Error::InvalidArgument("packet centre must be finite".into()));
        }
        for (name, v) in [("sigma", self.sigma), ("mass", self.mass), ("hbar", self.hbar)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn velocity(&self) -> f64 {
        self.p0 / self.mass
    }

    pub fn evolved(&self, t: f64) -> Self {
        let spread = self.hbar * t / (2.0 * self.mass * self.sigma * self.sigma);
        Self {
            x0: self.x0 + t * self.velocity(),
            sigma: self.sigma * (1.0 + spread * spread).sqrt(),
            ..*self
        }
    }

    /// `ψ(x)`.
    pub fn wavefunction(&self, x: f64) -> C64 {
        let s2 = self.sigma * self.sigma;
        let norm = (2.0 * std::f64::consts::PI * s2).powf(-0.25);
        let dx = x - self.x0;
        C64::new(-dx * dx / (4.0 * s2), self.p0 * dx / self.hbar).exp() * norm
    }
}

/// `ln⟨g₁|g₂⟩` together with the first two relative moments.
#[derive(Clone, Copy, Debug)]
struct GaussianIntegral {
    log_overlap: C64,
    /// `∫ x conj(g₁) g₂ / ⟨g₁|g₂⟩`.
    mean: C64,
    /// `∫ x² conj(g₁) g₂ / ⟨g₁|g₂⟩`.
    second: C64,
}

fn integral(g1: &GaussianPacket, g2: &GaussianPacket) -> GaussianIntegral {
    let (a, b) = (g1.x0, g2.x0);
    let (s1, s2) = (g1.sigma * g1.sigma, g2.sigma * g2.sigma);
    let (k1, k2) = (g1.p0 / g1.hbar, g2.p0 / g2.hbar);
    let alpha = 1.0 / (4.0 * s1) + 1.0 / (4.0 * s2);
    let beta = C64::new(a / (2.0 * s1) + b / (2.0 * s2), k2 - k1);
    let gamma = C64::new(-a * a / (4.0 * s1) - b * b / (4.0 * s2), k1 * a - k2 * b);
    // ln(N₁N₂ √(π/α)) = -½ ln(2π σ₁σ₂) + ½ ln(π/α)
    let log_prefactor = 0.5 * (std::f64::consts::PI / alpha).ln()
        - 0.5 * (2.0 * std::f64::consts::PI * g1.sigma * g2.sigma).ln();
    let mean = beta / (2.0 * alpha);
    GaussianIntegral {
        log_overlap: beta * beta / (4.0 * alpha) + gamma + log_prefactor,
        mean,
        second: mean * mean + 1.0 / (2.0 * alpha),
    }
}

/// `⟨g₁|g₂⟩`.
pub fn packet_overlap(g1: &GaussianPacket, g2: &GaussianPacket) -> C64 {
    integral(g1, g2).log_overlap.exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointerObservable {
    Position,
    Momentum,
    MomentumSquared,
}

/// `⟨g₁|a|g₂⟩` for a single-particle observable.
pub fn packet_matrix_element(g1: &GaussianPacket, g2: &GaussianPacket, obs: PointerObservable) -> C64 {
    let gi = integral(g1, g2);
    let overlap = gi.log_overlap.exp();
    let hbar = g2.hbar;
    let s2 = g2.sigma * g2.sigma;
    // ∂ₓ g₂ = u g₂ with u = c0 + c1 x
    let c1 = -1.0 / (2.0 * s2);
    let c0 = C64::new(g2.x0 / (2.0 * s2), g2.p0 / hbar);
    let i = C64::new(0.0, 1.0);
    let relative = match obs {
        PointerObservable::Position => gi.mean,
        PointerObservable::Momentum => -i * hbar * (c0 + c1 * gi.mean),
        PointerObservable::MomentumSquared => {
            // -ħ² ∂ₓ² g₂ = -ħ² (u² + c1) g₂
            let u2 = c0 * c0 + 2.0 * c0 * c1 * gi.mean + c1 * c1 * gi.second;
            -(hbar * hbar) * (u2 + c1)
        }
    };
    relative * overlap
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPointerState {
    packets: Vec<GaussianPacket>,
    label: usize,
}

impl GaussianPointerState {
    pub fn new(packets: Vec<GaussianPacket>, label: usize) -> Result<Self> {
        let first = packets
            .first()
            .ok_or_else(|| Error::InvalidArgument("a pointer needs at least one particle".into()))?;
        for p in &packets {
            p.validate()?;
            if (p.hbar - first.hbar).abs() > HBAR_TOL * first.hbar {
                return Err(Error::InvalidArgument("all packets must share hbar".into()));
            }
        }
        Ok(Self { packets, label })
    }

    /// `n` copies of one packet.
    pub fn identical(packet: GaussianPacket, n: usize, label: usize) -> Result<Self> {
        Self::new(vec![packet; n], label)
    }

    pub fn packets(&self) -> &[GaussianPacket] {
        &self.packets
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn num_particles(&self) -> usize {
        self.packets.len()
    }

    pub fn hbar(&self) -> f64 {
        self.packets[0].hbar
    }

    pub fn total_mass(&self) -> f64 {
        self.packets.iter().map(|p| p.mass).sum()
    }

    /// `⟨p⟩ = P/N`.
    pub fn mean_momentum(&self) -> f64 {
        total_momentum(self) / self.num_particles() as f64
    }

    /// `Σ m_k x₀^(k) / M`.
    pub fn center_of_mass(&self) -> f64 {
        self.packets.iter().map(|p| p.mass * p.x0).sum::<f64>() / self.total_mass()
    }

    /// `P/M`.
    pub fn com_velocity(&self) -> f64 {
        total_momentum(self) / self.total_mass()
    }
}

pub fn free_evolve(state: &GaussianPointerState, t: f64) -> Result<GaussianPointerState> {
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time must be finite, got {t}")));
    }
    Ok(GaussianPointerState {
        packets: state.packets.iter().map(|p| p.evolved(t)).collect(),
        label: state.label,
    })
}

/// `Σ_k p₀^(k)`.
pub fn total_momentum(state: &GaussianPointerState) -> f64 {
    state.packets.iter().map(|p| p.p0).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComPoint {
    pub t: f64,
    pub r_cm: f64,
}

pub fn com_trajectory(state: &GaussianPointerState, times: &[f64]) -> Result<Vec<ComPoint>> {
    times
        .iter()
        .map(|&t| {
            Ok(ComPoint {
                t,
                r_cm: free_evolve(state, t)?.center_of_mass(),
            })
        })
        .collect()
}

fn check_pair(a: &GaussianPointerState, b: &GaussianPointerState) -> Result<()> {
    if a.num_particles() != b.num_particles() {
        return Err(Error::DimensionMismatch {
            expected: a.num_particles(),
            actual: b.num_particles(),
        });
    }
    if (a.hbar() - b.hbar()).abs() > HBAR_TOL * a.hbar() {
        return Err(Error::InvalidArgument("branches use different hbar".into()));
    }
    Ok(())
}

/// `ln⟨Φ_i(t)|Φ_j(t)⟩ = Σ_k ln⟨g_k^i(t)|g_k^j(t)⟩`.
pub fn log_branch_overlap_complex(
    state_i: &GaussianPointerState,
    state_j: &GaussianPointerState,
    t: f64,
) -> Result<C64> {
    check_pair(state_i, state_j)?;
    let a = free_evolve(state_i, t)?;
    let b = free_evolve(state_j, t)?;
    Ok(a.packets
        .iter()
        .zip(&b.packets)
        .map(|(g1, g2)| integral(g1, g2).log_overlap)
        .sum())
}

/// `ln |⟨Φ_i(t)|Φ_j(t)⟩|`; stays finite where the overlap underflows.
pub fn log_branch_overlap(state_i: &GaussianPointerState, state_j: &GaussianPointerState, t: f64) -> Result<f64> {
    Ok(log_branch_overlap_complex(state_i, state_j, t)?.re.min(0.0))
}

/// `|⟨Φ_i(t)|Φ_j(t)⟩|`.
pub fn branch_overlap(state_i: &GaussianPointerState, state_j: &GaussianPointerState, t: f64) -> Result<f64> {
    Ok(log_branch_overlap(state_i, state_j, t)?.exp())
}

/// `⟨Φ_i|A|Φ_j⟩` at time `t` for `A = N⁻¹ Σ_k a_k`.
pub fn branch_matrix_element(
    state_i: &GaussianPointerState,
    state_j: &GaussianPointerState,
    t: f64,
    obs: PointerObservable,
) -> Result<C64> {
    check_pair(state_i, state_j)?;
    let a = free_evolve(state_i, t)?;
    let b = free_evolve(state_j, t)?;
    let n = a.num_particles();
    let overlaps: Vec<C64> = a.packets.iter().zip(&b.packets).map(|(g1, g2)| packet_overlap(g1, g2)).collect();
    // products of all overlaps but one, without dividing
    let mut prefix = vec![C64::new(1.0, 0.0); n + 1];
    for k in 0..n {
        prefix[k + 1] = prefix[k] * overlaps[k];
    }
    let mut suffix = C64::new(1.0, 0.0);
    let mut total = C64::new(0.0, 0.0);
    for k in (0..n).rev() {
        total += packet_matrix_element(&a.packets[k], &b.packets[k], obs) * prefix[k] * suffix;
        suffix *= overlaps[k];
    }
    Ok(total / n as f64)
}

/// `⟨Φ|A|Φ⟩/‖Φ‖² - ½(⟨Φ_i|A|Φ_i⟩ + ⟨Φ_j|A|Φ_j⟩)` for `Φ = Φ_i(t) + Φ_j(t)`.
pub fn interference(
    state_i: &GaussianPointerState,
    state_j: &GaussianPointerState,
    t: f64,
    obs: PointerObservable,
) -> Result<f64> {
    let aii = branch_matrix_element(state_i, state_i, t, obs)?.re;
    let ajj = branch_matrix_element(state_j, state_j, t, obs)?.re;
    let aij = branch_matrix_element(state_i, state_j, t, obs)?;
    let overlap = log_branch_overlap_complex(state_i, state_j, t)?.exp();
    let superposition = (aii + ajj + 2.0 * aij.re) / (2.0 + 2.0 * overlap.re);
    Ok(superposition - 0.5 * (aii + ajj))
}

/// Time at which the first packets of two branches pass each other,
/// `(x₀^j - x₀^i)·m/(p₀^i - p₀^j)`. `None` if they never meet.
pub fn crossing_time(state_i: &GaussianPointerState, state_j: &GaussianPointerState) -> Option<f64> {
    let (a, b) = (state_i.packets[0], state_j.packets[0]);
    let dv = a.velocity() - b.velocity();
    if dv == 0.0 {
        return None;
    }
    let t = (b.x0 - a.x0) / dv;
    (t.is_finite() && t >= 0.0).then_some(t)
}

/// Time for the first packets to close one initial width, `σ/|v_i - v_j|`.
pub fn sigma_crossing_time(state_i: &GaussianPointerState, state_j: &GaussianPointerState) -> Option<f64> {
    let (a, b) = (state_i.packets[0], state_j.packets[0]);
    let dv = (a.velocity() - b.velocity()).abs();
    (dv > 0.0).then(|| a.sigma.max(b.sigma) / dv)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointerCells {
    /// Cell of each input branch, ascending in `⟨p⟩`.
    pub labels: Vec<usize>,
    /// Mean of `⟨p⟩` over the branches in each cell.
    pub values: Vec<f64>,
}

impl PointerCells {
    pub fn num_cells(&self) -> usize {
        self.values.len()
    }
}

/// Bins branches by `⟨p⟩` in windows of width `delta_p` anchored at the
/// smallest value, so branches further apart than `delta_p` never share a
/// cell.
pub fn phase_cell_labels(states: &[GaussianPointerState], delta_p: f64) -> Result<PointerCells> {
    if !(delta_p.is_finite() && delta_p > 0.0) {
        return Err(Error::InvalidArgument(format!("delta_p must be positive, got {delta_p}")));
    }
    let means: Vec<f64> = states.iter().map(GaussianPointerState::mean_momentum).collect();
    let mut order: Vec<usize> = (0..means.len()).collect();
    order.sort_by(|&a, &b| means[a].total_cmp(&means[b]));
    let sorted: Vec<f64> = order.iter().map(|&k| means[k]).collect();
    let mut labels = vec![0; means.len()];
    let mut values = Vec::new();
    for (cell, range) in bin_sorted(&sorted, delta_p).into_iter().enumerate() {
        values.push(sorted[range.clone()].iter().sum::<f64>() / range.len() as f64);
        for k in range {
            labels[order[k]] = cell;
        }
    }
    Ok(PointerCells { labels, values })
}
