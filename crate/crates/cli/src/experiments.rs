use macrocell::cells::{decompose, CellResolution, PhaseCellDecomposition};
use macrocell::dynamics::{
    diagonality_index, disorder_check, disorder_residual, predicted_trajectory, revival_scenario,
    transition_matrices, uniform_in_cells, weights_trajectory, EnsembleConfig, EvolutionContext, Normalization,
};
use macrocell::hilbert::{basis_state, build_hamiltonian, pauli_string, random_state, HilbertSpace, LocalOperator, ModelKind};
use macrocell::observables::{
    commutator_scaling_sweep, intensive_pauli, least_squares_slope, offdiag_overlap, tilted_qubit, MacroObservable,
    ProductState,
};
use macrocell::pointer::{
    branch_overlap, crossing_time, interference, log_branch_overlap, phase_cell_labels, sigma_crossing_time,
    total_momentum, GaussianPacket, GaussianPointerState, PointerObservable,
};
use macrocell::states::{basis_ambiguity_test, mixture_test};
use macrocell::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Experiment, ExperimentConfig};
use crate::output::{complex_cells, complex_columns, Cell, Table};
use crate::CliError;

pub struct Report {
    pub tables: Vec<Table>,
    pub summary: Value,
}

pub fn run(config: &ExperimentConfig) -> Result<Report, CliError> {
    match config.experiment {
        Experiment::CommutatorScaling => commutator_scaling(config),
        Experiment::PhaseCells => phase_cells(config),
        Experiment::SuperpositionMixture => superposition_mixture(config),
        Experiment::BasisAmbiguity => basis_ambiguity(config),
        Experiment::OverlapScaling => overlap_scaling(config),
        Experiment::Dynamics => dynamics(config),
        Experiment::Revival => revival(config),
        Experiment::Pointer => pointer(config),
    }
}

fn template(label: &str) -> Result<LocalOperator, CliError> {
    Ok(LocalOperator::new((0..label.len()).collect(), pauli_string(label)?)?)
}

fn space(config: &ExperimentConfig) -> Result<HilbertSpace, CliError> {
    Ok(HilbertSpace::qubits(config.model.sites)?)
}

fn observables(config: &ExperimentConfig, space: &HilbertSpace) -> Result<Vec<MacroObservable>, CliError> {
    config
        .observables
        .iter()
        .map(|o| Ok(intensive_pauli(&o.template, space, o.placement)?))
        .collect()
}

fn decomposition(config: &ExperimentConfig) -> Result<PhaseCellDecomposition, CliError> {
    let space = space(config)?;
    let obs = observables(config, &space)?;
    let resolutions = config
        .observables
        .iter()
        .map(|o| CellResolution::new(o.delta))
        .collect::<macrocell::Result<Vec<_>>>()?;
    Ok(decompose(&obs, &resolutions)?)
}

fn context(config: &ExperimentConfig) -> Result<EvolutionContext, CliError> {
    let space = space(config)?;
    let model = &config.model;
    let couplings = if model.kind == ModelKind::DiagonalTest && model.couplings.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        (0..space.dimension()).map(|_| rng.random_range(-1.0..=1.0)).collect()
    } else {
        model.couplings.clone()
    };
    let h = build_hamiltonian(model.kind, &space, &couplings)?;
    Ok(EvolutionContext::new(h, model.hbar)?)
}

fn value_columns(decomp: &PhaseCellDecomposition, prefix: &str) -> Vec<String> {
    (0..decomp.num_cells()).map(|j| format!("{prefix}{j}")).collect()
}

fn commutator_scaling(config: &ExperimentConfig) -> Result<Report, CliError> {
    let c = &config.commutator;
    let sweep = commutator_scaling_sweep(&template(&c.a)?, &template(&c.b)?, c.placement, &c.sites.values())?;
    let mut table = Table::new("commutator_scaling", ["num_sites", "norm", "two_over_f"]);
    for p in &sweep.points {
        table.push(vec![p.num_sites.into(), p.norm.into(), (2.0 / p.num_sites as f64).into()]);
    }
    Ok(Report {
        tables: vec![table],
        summary: json!({ "a": c.a, "b": c.b, "placement": c.placement, "log_log_slope": sweep.slope }),
    })
}

fn phase_cells(config: &ExperimentConfig) -> Result<Report, CliError> {
    let decomp = decomposition(config)?;
    let m = decomp.num_observables();
    let mut columns = vec!["label".to_string(), "dim".to_string()];
    columns.extend((0..m).map(|k| format!("value_{k}")));
    let mut table = Table::new("cells", columns);
    for cell in decomp.cells() {
        let mut row: Vec<Cell> = vec![cell.label.into(), cell.dim.into()];
        row.extend(cell.values.iter().map(|&v| Cell::from(v)));
        table.push(row);
    }
    let (orthogonality, method) = if decomp.dimension() <= 256 {
        (decomp.orthogonality_error()?, "pairwise products")
    } else {
        (decomp.orthogonality_bound(), "gram bound")
    };
    let summary = json!({
        "num_cells": decomp.num_cells(),
        "dimension": decomp.dimension(),
        "resolutions": config.observables.iter().map(|o| o.delta).collect::<Vec<_>>(),
        "residuals": decomp.residuals(),
        "completeness_error": decomp.completeness_error(),
        "orthonormality_error": decomp.orthonormality_error(),
        "orthogonality_error": orthogonality,
        "orthogonality_method": method,
        "discernible": decomp.is_discernible(),
    });
    Ok(Report {
        tables: vec![table],
        summary,
    })
}

/// Random vector in cell `label` with random coefficients and phase.
fn random_in_cell(decomp: &PhaseCellDecomposition, label: usize, rng: &mut ChaCha8Rng) -> Result<Vec<C64>, CliError> {
    let dim = decomp.cell(label)?.dim;
    let coeffs = random_state(dim, rng);
    let phase = C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
    let mut v = vec![C64::new(0.0, 0.0); decomp.dimension()];
    for (i, a) in coeffs.iter().enumerate() {
        for (out, b) in v.iter_mut().zip(decomp.basis_vector(label, i)?) {
            *out += phase * a * b * std::f64::consts::FRAC_1_SQRT_2;
        }
    }
    Ok(v)
}

fn superposition_mixture(config: &ExperimentConfig) -> Result<Report, CliError> {
    let decomp = decomposition(config)?;
    let k = decomp.num_cells();
    if k < 2 {
        return Err(CliError::Config("the decomposition has a single cell; no distinct-cell pairs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut table = Table::new(
        "mixture",
        [
            "pair",
            "cell_1",
            "cell_2",
            "observable",
            "lhs",
            "rhs",
            "discrepancy",
            "normalized_lhs",
            "normalized_rhs",
        ],
    );
    let mut worst: f64 = 0.0;
    for pair in 0..config.mixture.pairs {
        let a = rng.random_range(0..k);
        let b = (a + rng.random_range(1..k)) % k;
        let phi1 = random_in_cell(&decomp, a, &mut rng)?;
        let phi2 = random_in_cell(&decomp, b, &mut rng)?;
        for idx in 0..decomp.num_observables() {
            let r = mixture_test(&phi1, &phi2, &decomp, idx)?;
            worst = worst.max(r.max_abs_discrepancy);
            table.push(vec![
                pair.into(),
                a.into(),
                b.into(),
                idx.into(),
                r.lhs.into(),
                r.rhs.into(),
                r.max_abs_discrepancy.into(),
                r.normalized.lhs.into(),
                r.normalized.rhs.into(),
            ]);
        }
    }
    Ok(Report {
        tables: vec![table],
        summary: json!({ "pairs": config.mixture.pairs, "num_cells": k, "max_discrepancy": worst }),
    })
}

fn optional(v: Option<f64>) -> Cell {
    v.map_or_else(|| Cell::Text(String::new()), Cell::Float)
}

fn basis_ambiguity(config: &ExperimentConfig) -> Result<Report, CliError> {
    let decomp = decomposition(config)?;
    let mut table = Table::new(
        "ambiguity",
        [
            "cell_1",
            "cell_2",
            "verdict",
            "discriminating_observable",
            "variance",
            "expected_variance",
            "rotated_minus_variance",
            "rotated_plus_variance",
            "rotated_pair_certified",
        ],
    );
    let mut certified = 0usize;
    let mut pairs = 0usize;
    for a in 0..decomp.num_cells() {
        for b in a + 1..decomp.num_cells() {
            let r = basis_ambiguity_test(&decomp.basis_vector(a, 0)?, &decomp.basis_vector(b, 0)?, &decomp)?;
            pairs += 1;
            certified += usize::from(r.rotated_pair_certified);
            let verdict = serde_json::to_value(r.verdict)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            let disc = r.discriminating_observable;
            table.push(vec![
                a.into(),
                b.into(),
                verdict.into(),
                disc.map_or_else(|| Cell::Text(String::new()), Cell::from),
                optional(disc.map(|k| r.variances[k])),
                optional(r.expected_variance),
                optional(disc.map(|k| r.rotated_variances[k][0])),
                optional(disc.map(|k| r.rotated_variances[k][1])),
                r.rotated_pair_certified.into(),
            ]);
        }
    }
    Ok(Report {
        tables: vec![table],
        summary: json!({ "pairs": pairs, "rotated_pairs_certified": certified }),
    })
}

fn overlap_scaling(config: &ExperimentConfig) -> Result<Report, CliError> {
    let o = &config.overlap;
    let local = template(&o.template)?;
    let theta = o.theta;
    let reports = o
        .sites
        .values()
        .into_par_iter()
        .map(|n| {
            let space = HilbertSpace::qubits(n)?;
            let obs = macrocell::observables::build_intensive(&local, &space, o.placement)?;
            let phi_i = ProductState::uniform(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)], n)?;
            let phi_j = ProductState::uniform(tilted_qubit(theta), n)?;
            offdiag_overlap(&obs, &phi_i, &phi_j, false)
        })
        .collect::<macrocell::Result<Vec<_>>>()?;
    let mut columns = vec!["num_sites".to_string()];
    columns.extend(complex_columns("value"));
    columns.extend(["abs", "bound", "tau", "tau_pow_n"].map(String::from));
    let mut table = Table::new("overlap_scaling", columns);
    let (mut ns, mut logs) = (Vec::new(), Vec::new());
    for r in &reports {
        let mut row: Vec<Cell> = vec![r.num_sites.into()];
        row.extend(complex_cells(r.value));
        row.extend([
            r.value.norm().into(),
            r.bound.into(),
            r.tau.into(),
            r.tau.powi(r.num_sites as i32).into(),
        ]);
        table.push(row);
        if r.value.norm() > 0.0 {
            ns.push(r.num_sites as f64);
            logs.push(r.value.norm().ln());
        }
    }
    let bound_held = reports.iter().all(|r| r.value.norm() <= r.bound * (1.0 + 1e-12));
    Ok(Report {
        tables: vec![table],
        summary: json!({
            "template": o.template,
            "theta": theta,
            "tau": reports.first().map(|r| r.tau),
            "log_slope": least_squares_slope(&ns, &logs),
            "bound_held": bound_held,
        }),
    })
}

fn initial_weights(config: &ExperimentConfig, decomp: &PhaseCellDecomposition) -> Vec<f64> {
    config.dynamics.initial_weights.clone().unwrap_or_else(|| {
        let largest = (0..decomp.num_cells())
            .max_by_key(|&j| (decomp.cells()[j].dim, std::cmp::Reverse(j)))
            .unwrap_or(0);
        let mut w = vec![0.0; decomp.num_cells()];
        w[largest] = 1.0;
        w
    })
}

fn dynamics(config: &ExperimentConfig) -> Result<Report, CliError> {
    let ctx = context(config)?;
    let decomp = decomposition(config)?;
    let times = config.times.values();
    let w0 = initial_weights(config, &decomp);
    let psi = uniform_in_cells(&decomp, &w0)?;
    let k = decomp.num_cells();

    let exact = weights_trajectory(&ctx, &psi, &decomp, &times)?;
    let predicted = predicted_trajectory(&ctx, &psi, &decomp, &times)?;
    let mut columns = vec!["t".to_string()];
    columns.extend(value_columns(&decomp, "w_exact_"));
    columns.extend(value_columns(&decomp, "w_predicted_"));
    let mut weights = Table::new("weights", columns);
    for (i, &t) in times.iter().enumerate() {
        let mut row: Vec<Cell> = vec![t.into()];
        row.extend(exact.weights[i].iter().map(|&w| Cell::from(w)));
        row.extend(predicted.weights[i].iter().map(|&w| Cell::from(w)));
        weights.push(row);
    }

    let stochastic = transition_matrices(&ctx, &decomp, &times, Normalization::ColumnStochastic)?;
    let reported = match config.dynamics.normalization {
        Normalization::ColumnStochastic => stochastic.clone(),
        n => transition_matrices(&ctx, &decomp, &times, n)?,
    };
    let mut columns = vec!["t".to_string()];
    columns.extend((0..k).flat_map(|j| (0..k).map(move |l| format!("T_{j}_{l}"))));
    let mut transition = Table::new("transition", columns);
    for m in &reported {
        let mut row: Vec<Cell> = vec![m.t.into()];
        row.extend(m.entries.iter().flatten().map(|&v| Cell::from(v)));
        transition.push(row);
    }

    let samples = config.dynamics.samples;
    let mut disorder = Table::new(
        "disorder",
        [
            "t",
            "residual",
            "diagonality_index",
            "ensemble_residual",
            "ensemble_band",
            "ensemble_consistent",
        ],
    );
    let rows = times
        .par_iter()
        .zip(&stochastic)
        .map(|(&t, m)| {
            let diag = diagonality_index(m)?;
            if samples == 0 {
                let r = disorder_residual(&ctx, &psi, &decomp, t)?;
                return Ok(vec![t.into(), r.into(), diag.into(), "".into(), "".into(), "".into()]);
            }
            let ensemble = EnsembleConfig {
                samples,
                seed: config.seed,
            };
            let r = disorder_check(&ctx, &psi, &decomp, t, ensemble)?;
            Ok(vec![
                t.into(),
                r.residual.into(),
                diag.into(),
                r.ensemble_residual.into(),
                r.band.into(),
                r.ensemble_consistent.into(),
            ])
        })
        .collect::<macrocell::Result<Vec<_>>>()?;
    let max_residual = rows
        .iter()
        .filter_map(|r: &Vec<Cell>| match r[1] {
            Cell::Float(v) => Some(v),
            _ => None,
        })
        .fold(0.0, f64::max);
    for row in rows {
        disorder.push(row);
    }
    let max_identity_deviation = stochastic.iter().map(|m| m.identity_deviation()).fold(0.0, f64::max);
    let max_column_sum_error = stochastic
        .iter()
        .flat_map(|m| m.column_sums())
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(Report {
        tables: vec![weights, transition, disorder],
        summary: json!({
            "model": config.model.kind.name(),
            "num_cells": k,
            "cell_dims": decomp.cells().iter().map(|c| c.dim).collect::<Vec<_>>(),
            "initial_weights": w0,
            "normalization": config.dynamics.normalization,
            "ensemble_samples": samples,
            "max_disorder_residual": max_residual,
            "max_identity_deviation": max_identity_deviation,
            "max_column_sum_error": max_column_sum_error,
        }),
    })
}

fn revival(config: &ExperimentConfig) -> Result<Report, CliError> {
    let ctx = context(config)?;
    let decomp = decomposition(config)?;
    let r = &config.revival;
    let dim = decomp.dimension();
    for (name, index) in [("revival.phi1", r.phi1), ("revival.phi2", r.phi2)] {
        if index >= dim {
            return Err(CliError::Config(format!("{name} = {index} exceeds the dimension {dim}")));
        }
    }
    let phase = C64::from_polar(1.0, r.phase2 * std::f64::consts::PI);
    let phi2: Vec<C64> = basis_state(dim, r.phi2).iter().map(|z| z * phase).collect();
    let report = revival_scenario(&ctx, &basis_state(dim, r.phi1), &phi2, &decomp, r.observable, &config.times.values())?;
    let mut columns = vec!["t".to_string()];
    columns.extend(complex_columns("inner"));
    columns.extend(["cell_overlap", "superposition", "mixture", "interference"].map(String::from));
    let mut table = Table::new("revival", columns);
    for p in &report.points {
        table.push(vec![
            p.t.into(),
            p.inner_re.into(),
            p.inner_im.into(),
            p.cell_overlap.into(),
            p.superposition.into(),
            p.mixture.into(),
            p.interference.into(),
        ]);
    }
    let peak = report.peak().map(|p| json!({ "t": p.t, "cell_overlap": p.cell_overlap, "interference": p.interference }));
    Ok(Report {
        tables: vec![table],
        summary: json!({ "observable": r.observable, "peak": peak }),
    })
}

fn pointer(config: &ExperimentConfig) -> Result<Report, CliError> {
    let p = &config.pointer;
    let times = config.times.values();
    let packet = |b: usize| GaussianPacket::new(p.positions[b], p.momenta[b], p.sigma, p.mass, p.hbar);
    let branches = |n: usize| -> macrocell::Result<[GaussianPointerState; 2]> {
        Ok([
            GaussianPointerState::identical(packet(0)?, n, 0)?,
            GaussianPointerState::identical(packet(1)?, n, 1)?,
        ])
    };
    let per_n = p
        .particles
        .values()
        .into_par_iter()
        .map(|n| {
            let [si, sj] = branches(n)?;
            times
                .iter()
                .map(|&t| {
                    let ei = macrocell::pointer::free_evolve(&si, t)?;
                    let ej = macrocell::pointer::free_evolve(&sj, t)?;
                    Ok(vec![
                        n.into(),
                        t.into(),
                        log_branch_overlap(&si, &sj, t)?.into(),
                        branch_overlap(&si, &sj, t)?.into(),
                        ei.center_of_mass().into(),
                        ej.center_of_mass().into(),
                        interference(&si, &sj, t, PointerObservable::Position)?.into(),
                        interference(&si, &sj, t, PointerObservable::Momentum)?.into(),
                        interference(&si, &sj, t, PointerObservable::MomentumSquared)?.into(),
                    ])
                })
                .collect::<macrocell::Result<Vec<Vec<Cell>>>>()
        })
        .collect::<macrocell::Result<Vec<_>>>()?;
    let mut table = Table::new(
        "pointer",
        [
            "num_particles",
            "t",
            "log_overlap",
            "overlap",
            "com_1",
            "com_2",
            "interference_x",
            "interference_p",
            "interference_p2",
        ],
    );
    for row in per_n.into_iter().flatten() {
        table.push(row);
    }

    let ns: Vec<f64> = p.particles.values().iter().map(|&n| n as f64).collect();
    let log_slopes = times
        .iter()
        .map(|&t| {
            let logs = p
                .particles
                .values()
                .iter()
                .map(|&n| {
                    let [si, sj] = branches(n)?;
                    log_branch_overlap(&si, &sj, t)
                })
                .collect::<macrocell::Result<Vec<_>>>()?;
            Ok(json!({ "t": t, "slope": least_squares_slope(&ns, &logs) }))
        })
        .collect::<macrocell::Result<Vec<_>>>()?;
    let [si, sj] = branches(p.particles.max)?;
    let cells = phase_cell_labels(&[si.clone(), sj.clone()], p.delta_p)?;
    Ok(Report {
        tables: vec![table],
        summary: json!({
            "crossing_time": crossing_time(&si, &sj),
            "sigma_crossing_time": sigma_crossing_time(&si, &sj),
            "total_momentum": [total_momentum(&si), total_momentum(&sj)],
            "com_velocity": [si.com_velocity(), sj.com_velocity()],
            "pointer_cells": cells,
            "log_overlap_slope_in_n": log_slopes,
        }),
    })
}
