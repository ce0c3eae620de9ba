use faer::Mat;
use macrocell::cells::{decompose, CellResolution, PhaseCellDecomposition};
use macrocell::dynamics::{
    transition_matrices, transition_matrix, weights_trajectory, EvolutionContext, Normalization,
};
use macrocell::hilbert::{
    build_hamiltonian, diagonal_in_basis, diagonalize, embed, inner, kron, max_abs, norm, op_norm,
    random_state, HilbertSpace, LocalOperator, ManyBodyOperator, ModelKind,
};
use macrocell::observables::{
    build_intensive, commutator_scaling_sweep, intensive_pauli, offdiag_overlap,
    tilted_qubit, Placement, ProductState,
};
use macrocell::pointer::{
    branch_overlap, com_trajectory, free_evolve, log_branch_overlap, total_momentum, GaussianPacket,
    GaussianPointerState,
};
use macrocell::states::{coarse_variance, mixture_test};
use macrocell::C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian_matrix(n: usize, r: &mut ChaCha8Rng) -> Mat<C64> {
    Mat::from_fn(n, n, |_, _| C64::new(r.sample(StandardNormal), r.sample(StandardNormal)))
}

fn hermitian(n: usize, r: &mut ChaCha8Rng) -> Mat<C64> {
    let g = gaussian_matrix(n, r);
    Mat::from_fn(n, n, |i, j| (g[(i, j)] + g[(j, i)].conj()) * 0.5)
}

fn unitary(n: usize, r: &mut ChaCha8Rng) -> Mat<C64> {
    let space = HilbertSpace::new(1, n).unwrap();
    let h = ManyBodyOperator::hermitian_from(space, hermitian(n, r)).unwrap();
    diagonalize(&h).unwrap().eigenvectors().to_owned()
}

fn max_diff(a: &Mat<C64>, b: &Mat<C64>) -> f64 {
    max_abs((a - b).as_ref())
}

/// Random vector inside cell `label`.
fn vector_in_cell(d: &PhaseCellDecomposition, label: usize, r: &mut ChaCha8Rng) -> Vec<C64> {
    let basis = d.cell_basis(label).unwrap();
    let b = random_state(basis.ncols(), r);
    (0..basis.nrows())
        .map(|row| (0..basis.ncols()).map(|i| basis[(row, i)] * b[i]).sum())
        .collect()
}

fn mz_mx(f: usize, dz: f64, dx: f64) -> PhaseCellDecomposition {
    let space = HilbertSpace::qubits(f).unwrap();
    let mz = intensive_pauli("z", &space, Placement::AllSubsets).unwrap();
    let mx = intensive_pauli("x", &space, Placement::AllSubsets).unwrap();
    decompose(&[mz, mx], &[CellResolution::new(dz).unwrap(), CellResolution::new(dx).unwrap()]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn embed_is_a_homomorphism_on_disjoint_supports(seed in any::<u64>(), f in 2usize..5, s in 0usize..4, t in 0usize..4) {
        prop_assume!(s < f && t < f && s != t);
        let mut r = rng(seed);
        let space = HilbertSpace::qubits(f).unwrap();
        let a = gaussian_matrix(2, &mut r);
        let b = gaussian_matrix(2, &mut r);
        let ea = embed(&LocalOperator::new(vec![s], a.clone()).unwrap(), &space).unwrap();
        let eb = embed(&LocalOperator::new(vec![t], b.clone()).unwrap(), &space).unwrap();
        let joint = if s < t { kron(a.as_ref(), b.as_ref()) } else { kron(b.as_ref(), a.as_ref()) };
        let ej = embed(&LocalOperator::new(vec![s.min(t), s.max(t)], joint).unwrap(), &space).unwrap();
        prop_assert!(max_diff(&ea.product(&eb).unwrap(), &ej.matrix().to_owned()) < 1e-10);
        prop_assert!(max_abs(ea.commutator(&eb).unwrap().as_ref()) < 1e-12);
    }

    #[test]
    fn diagonalize_round_trips(seed in any::<u64>(), n in 1usize..24) {
        let mut r = rng(seed);
        let space = HilbertSpace::new(1, n).unwrap();
        let op = ManyBodyOperator::hermitian_from(space, hermitian(n, &mut r)).unwrap();
        let s = diagonalize(&op).unwrap();
        prop_assert!(s.reconstruction_error(op.matrix()) <= 1e-9);
        prop_assert!(s.orthonormality_error() <= 1e-10);
        prop_assert!(s.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn op_norm_is_submultiplicative(seed in any::<u64>(), n in 1usize..16) {
        let mut r = rng(seed);
        let space = HilbertSpace::new(1, n).unwrap();
        let a = ManyBodyOperator::hermitian_from(space, hermitian(n, &mut r)).unwrap();
        let b = ManyBodyOperator::hermitian_from(space, hermitian(n, &mut r)).unwrap();
        let ab = ManyBodyOperator::new(space, a.product(&b).unwrap()).unwrap();
        prop_assert!(op_norm(&ab) <= op_norm(&a) * op_norm(&b) + 1e-9);
    }

    #[test]
    fn intensive_operator_is_the_normalized_sum(seed in any::<u64>(), f in 2usize..6, two_body in any::<bool>(), chain in any::<bool>()) {
        let mut r = rng(seed);
        let space = HilbertSpace::qubits(f).unwrap();
        let n = if two_body { 2 } else { 1 };
        let template = LocalOperator::new((0..n).collect(), hermitian(1 << n, &mut r)).unwrap();
        let placement = if chain { Placement::NearestNeighborChain } else { Placement::AllSubsets };
        let a = build_intensive(&template, &space, placement).unwrap();
        let supports = placement.supports(f, n);
        let mut sum = Mat::<C64>::zeros(space.dimension(), space.dimension());
        for support in &supports {
            sum += embed(&template.moved_to(support.clone()).unwrap(), &space).unwrap().matrix();
        }
        let scaled = Mat::from_fn(sum.nrows(), sum.ncols(), |i, j| sum[(i, j)] / supports.len() as f64);
        prop_assert!(max_diff(&a.operator().matrix().to_owned(), &scaled) < 1e-10);
        prop_assert_eq!(a.normalization(), supports.len() as f64);
        let template_norm = op_norm(&ManyBodyOperator::new(HilbertSpace::qubits(n).unwrap(), template.matrix().to_owned()).unwrap());
        prop_assert!(op_norm(a.operator()) <= template_norm + 1e-9);
    }

    #[test]
    fn one_body_commutators_decay_as_one_over_f(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = LocalOperator::new(vec![0], hermitian(2, &mut r)).unwrap();
        let b = LocalOperator::new(vec![0], hermitian(2, &mut r)).unwrap();
        let sweep = commutator_scaling_sweep(&a, &b, Placement::AllSubsets, &[2, 3, 4, 5, 6]).unwrap();
        prop_assume!(sweep.points[0].norm > 1e-6);
        prop_assert!(sweep.points.windows(2).all(|w| w[1].norm < w[0].norm));
        prop_assert!((sweep.slope.unwrap() + 1.0).abs() < 1e-6);
    }

    #[test]
    fn few_body_commutators_decay(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = LocalOperator::new(vec![0, 1], hermitian(4, &mut r)).unwrap();
        let b = LocalOperator::new(vec![0], hermitian(2, &mut r)).unwrap();
        let sweep = commutator_scaling_sweep(&a, &b, Placement::AllSubsets, &[4, 5, 6, 7, 8]).unwrap();
        prop_assume!(sweep.points[0].norm > 1e-6);
        prop_assert!(sweep.points.windows(2).all(|w| w[1].norm < w[0].norm), "{:?}", sweep.points);
        prop_assert!(sweep.slope.unwrap() <= -0.5, "{:?}", sweep.slope);
    }

    #[test]
    fn overlap_never_exceeds_its_bound(seed in any::<u64>(), f in 2usize..7, two_body in any::<bool>()) {
        let mut r = rng(seed);
        let space = HilbertSpace::qubits(f).unwrap();
        let n = if two_body { 2 } else { 1 };
        let template = LocalOperator::new((0..n).collect(), hermitian(1 << n, &mut r)).unwrap();
        let obs = build_intensive(&template, &space, Placement::AllSubsets).unwrap();
        let phi_i = ProductState::new((0..f).map(|_| random_state(2, &mut r)).collect()).unwrap();
        let phi_j = ProductState::new((0..f).map(|_| random_state(2, &mut r)).collect()).unwrap();
        let report = offdiag_overlap(&obs, &phi_i, &phi_j, true).unwrap();
        prop_assert!(report.value.norm() <= report.bound + 1e-12);
    }

    #[test]
    fn aligned_overlap_saturates_the_bound(theta in 0.05f64..1.5, f in 2usize..9) {
        let space = HilbertSpace::qubits(f).unwrap();
        let mz = intensive_pauli("z", &space, Placement::AllSubsets).unwrap();
        let phi_i = ProductState::uniform(tilted_qubit(0.0), f).unwrap();
        let phi_j = ProductState::uniform(tilted_qubit(theta), f).unwrap();
        let report = offdiag_overlap(&mz, &phi_i, &phi_j, false).unwrap();
        prop_assert!(report.value.norm() / report.bound >= 0.99);
        prop_assert!((report.value.re - theta.cos().powi(f as i32)).abs() < 1e-12);
    }

    #[test]
    fn overlap_is_exponential_in_n(theta in 0.1f64..1.4) {
        let tau = theta.cos();
        let logs: Vec<(f64, f64)> = (2..=8)
            .map(|f| {
                let space = HilbertSpace::qubits(f).unwrap();
                let mz = intensive_pauli("z", &space, Placement::AllSubsets).unwrap();
                let phi_i = ProductState::uniform(tilted_qubit(0.0), f).unwrap();
                let phi_j = ProductState::uniform(tilted_qubit(theta), f).unwrap();
                let v = offdiag_overlap(&mz, &phi_i, &phi_j, false).unwrap().value.norm();
                (f as f64, v.ln())
            })
            .collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = logs.into_iter().unzip();
        let slope = macrocell::observables::least_squares_slope(&xs, &ys).unwrap();
        prop_assert!((slope - tau.ln()).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn decompositions_are_complete_and_orthogonal(seed in any::<u64>(), f in 2usize..6, d1 in 0.05f64..1.5, d2 in 0.05f64..1.5) {
        let mut r = rng(seed);
        let space = HilbertSpace::qubits(f).unwrap();
        let a = build_intensive(&LocalOperator::new(vec![0], hermitian(2, &mut r)).unwrap(), &space, Placement::AllSubsets).unwrap();
        let b = build_intensive(&LocalOperator::new(vec![0, 1], hermitian(4, &mut r)).unwrap(), &space, Placement::AllSubsets).unwrap();
        let d = decompose(&[a, b], &[CellResolution::new(d1).unwrap(), CellResolution::new(d2).unwrap()]).unwrap();
        prop_assert!(d.completeness_error() <= 1e-9);
        prop_assert!(d.orthogonality_error().unwrap() <= 1e-9);
        prop_assert_eq!(d.cells().iter().map(|c| c.dim).sum::<usize>(), space.dimension());
        prop_assert!(d.residual(0).unwrap() <= d1 + 1e-9);
        let ca = d.coarse_observable(0).unwrap();
        let cb = d.coarse_observable(1).unwrap();
        prop_assert!(commutator_of(&ca, &cb) <= 1e-10);
        for label in 0..d.num_cells() {
            let p = d.projector(label).unwrap();
            let p2 = p.product(&p).unwrap();
            prop_assert!(max_diff(&p2, &p.matrix().to_owned()) <= 1e-9);
            let trace: f64 = (0..p.dimension()).map(|i| p.matrix()[(i, i)].re).sum();
            prop_assert!((trace - d.cells()[label].dim as f64).abs() <= 1e-8);
        }
    }

    #[test]
    fn coarse_family_ignores_degenerate_basis_choice(seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = 3;
        let space = HilbertSpace::qubits(f).unwrap();
        let dim = space.dimension();
        // spectrum with multiplicities (3, 3, 2)
        let energies = [-1.0, -1.0, -1.0, 0.2, 0.2, 0.2, 1.0, 1.0];
        let v = unitary(dim, &mut r);
        let mut w = Mat::<C64>::zeros(dim, dim);
        for (start, len) in [(0, 3), (3, 3), (6, 2)] {
            let block = unitary(len, &mut r);
            for i in 0..len {
                for j in 0..len {
                    w[(start + i, start + j)] = block[(i, j)];
                }
            }
        }
        let rotated = &v * &w;
        let a = diagonal_in_basis(&space, v.as_ref(), &energies).unwrap();
        let a_rot = diagonal_in_basis(&space, rotated.as_ref(), &energies).unwrap();
        let b = ManyBodyOperator::hermitian_from(space, hermitian(dim, &mut r)).unwrap();
        let res = [CellResolution::new(0.3).unwrap(), CellResolution::new(0.5).unwrap()];
        let d = decompose(&[a, b.clone()], &res).unwrap();
        let d_rot = decompose(&[a_rot, b], &res).unwrap();
        prop_assert_eq!(d.num_cells(), d_rot.num_cells());
        for (x, y) in d.cells().iter().zip(d_rot.cells()) {
            prop_assert_eq!(x.dim, y.dim);
            for (u, v) in x.values.iter().zip(&y.values) {
                prop_assert!((u - v).abs() < 1e-8);
            }
        }
        for k in 0..2 {
            let p = d.coarse_observable(k).unwrap();
            let q = d_rot.coarse_observable(k).unwrap();
            prop_assert!(max_diff(&p.matrix().to_owned(), &q.matrix().to_owned()) < 1e-8);
        }
    }

    #[test]
    fn distinct_cells_do_not_interfere(seed in any::<u64>(), f in 2usize..5) {
        let mut r = rng(seed);
        let d = mz_mx(f, 0.3, 0.4);
        let k = d.num_cells();
        let j1 = r.random_range(0..k);
        let j2 = (j1 + 1 + r.random_range(0..k - 1)) % k;
        let phi1 = vector_in_cell(&d, j1, &mut r);
        let phi2 = vector_in_cell(&d, j2, &mut r);
        for index in 0..2 {
            let cross = inner(&phi1, &d.apply_coarse(index, &phi2).unwrap());
            prop_assert!(cross.norm() <= 1e-10);
        }
        // phase invariance of the mixture identity
        let mut discrepancies = Vec::new();
        for m in 0..8 {
            let phase = C64::from_polar(1.0, m as f64 * std::f64::consts::TAU / 8.0);
            let rotated: Vec<C64> = phi2.iter().map(|x| x * phase).collect();
            let report = mixture_test(&phi1, &rotated, &d, 0).unwrap();
            prop_assert!(report.max_abs_discrepancy <= 1e-10);
            discrepancies.push(report.lhs);
        }
        prop_assert!(discrepancies.iter().all(|x| (x - discrepancies[0]).abs() <= 1e-10));
        // equal-weight superposition sits half in each cell
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi: Vec<C64> = phi1.iter().zip(&phi2).map(|(a, b)| (a + b) * s).collect();
        let state = macrocell::states::analyze(&psi, &d).unwrap();
        prop_assert!((state.weights()[j1] - 0.5).abs() <= 1e-10);
        prop_assert!((state.weights()[j2] - 0.5).abs() <= 1e-10);
    }

    #[test]
    fn two_cell_variance_lower_bound(seed in any::<u64>(), weight in 0.01f64..0.99) {
        let mut r = rng(seed);
        let d = mz_mx(3, 0.3, 0.4);
        let k = d.num_cells();
        let j1 = r.random_range(0..k);
        let j2 = (j1 + 1 + r.random_range(0..k - 1)) % k;
        let phi1 = vector_in_cell(&d, j1, &mut r);
        let phi2 = vector_in_cell(&d, j2, &mut r);
        let (a, b) = (weight.sqrt(), (1.0 - weight).sqrt());
        let psi: Vec<C64> = phi1.iter().zip(&phi2).map(|(x, y)| x * a + y * b).collect();
        for index in 0..2 {
            let gap = d.cells()[j1].values[index] - d.cells()[j2].values[index];
            let var = coarse_variance(&psi, &d, index).unwrap();
            prop_assert!(var >= weight * (1.0 - weight) * gap * gap - 1e-9);
        }
    }

    #[test]
    fn evolution_preserves_norm_and_weight(seed in any::<u64>(), f in 2usize..5, h in 0.1f64..2.0) {
        let mut r = rng(seed);
        let space = HilbertSpace::qubits(f).unwrap();
        let ctx = EvolutionContext::with_unit_hbar(build_hamiltonian(ModelKind::TransverseFieldIsing, &space, &[1.0, h]).unwrap()).unwrap();
        let d = mz_mx(f, 0.3, 0.5);
        let psi = random_state(space.dimension(), &mut r);
        let times: Vec<f64> = (0..6).map(|_| r.random_range(-5.0..5.0)).collect();
        for &t in &times {
            prop_assert!((norm(&ctx.evolve(&psi, t).unwrap()) - 1.0).abs() <= 1e-10);
        }
        for w in weights_trajectory(&ctx, &psi, &d, &times).unwrap().weights {
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
        prop_assert!(transition_matrix(&ctx, &d, 0.0, Normalization::ColumnStochastic).unwrap().identity_deviation() <= 1e-10);
        for t in transition_matrices(&ctx, &d, &times, Normalization::ColumnStochastic).unwrap() {
            prop_assert!(t.column_sums().iter().all(|s| (s - 1.0).abs() <= 1e-9));
            prop_assert!(t.entries.iter().flatten().all(|&v| v >= -1e-12));
        }
    }

    #[test]
    fn commuting_hamiltonian_freezes_cells(seed in any::<u64>(), f in 2usize..5) {
        let mut r = rng(seed);
        let space = HilbertSpace::qubits(f).unwrap();
        let d = mz_mx(f, 0.3, 0.5);
        let energies: Vec<f64> = (0..space.dimension()).map(|_| r.random_range(-3.0..3.0)).collect();
        let h = diagonal_in_basis(&space, d.total_basis(), &energies).unwrap();
        for k in 0..d.num_observables() {
            prop_assert!(commutator_of(&h, &d.coarse_observable(k).unwrap()) <= 1e-9);
        }
        let ctx = EvolutionContext::with_unit_hbar(h).unwrap();
        let psi = random_state(space.dimension(), &mut r);
        let times = [0.3, 1.1, 4.2];
        for t in transition_matrices(&ctx, &d, &times, Normalization::ColumnStochastic).unwrap() {
            prop_assert!(t.identity_deviation() <= 1e-9);
        }
        let traj = weights_trajectory(&ctx, &psi, &d, &times).unwrap();
        let w0 = macrocell::states::analyze(&psi, &d).unwrap();
        for w in &traj.weights {
            for (a, b) in w.iter().zip(w0.weights()) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }
}

fn commutator_of(a: &ManyBodyOperator, b: &ManyBodyOperator) -> f64 {
    macrocell::observables::operator_commutator_norm(a, b).unwrap()
}

fn packet_strategy() -> impl Strategy<Value = GaussianPacket> {
    (-5.0f64..5.0, -2.0f64..2.0, 0.2f64..3.0, 0.5f64..5.0)
        .prop_map(|(x0, p0, sigma, mass)| GaussianPacket::new(x0, p0, sigma, mass, 1.0).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn branch_overlap_is_a_probability_amplitude(a in prop::collection::vec(packet_strategy(), 1..6), b in prop::collection::vec(packet_strategy(), 6), t in -3.0f64..3.0) {
        let n = a.len();
        let si = GaussianPointerState::new(a, 0).unwrap();
        let sj = GaussianPointerState::new(b[..n].to_vec(), 1).unwrap();
        let o = branch_overlap(&si, &sj, t).unwrap();
        prop_assert!((0.0..=1.0).contains(&o));
        prop_assert!((branch_overlap(&si, &si, t).unwrap() - 1.0).abs() <= 1e-12);
        if si != sj {
            prop_assert!(o < 1.0);
        }
    }

    #[test]
    fn distinct_momenta_orthogonalize_exponentially(g in packet_strategy(), dp in 0.05f64..1.0, t in 0.0f64..3.0) {
        let h = GaussianPacket { p0: g.p0 + dp, ..g };
        let logs: Vec<f64> = (1..=12)
            .map(|n| {
                let si = GaussianPointerState::identical(g, n, 0).unwrap();
                let sj = GaussianPointerState::identical(h, n, 1).unwrap();
                log_branch_overlap(&si, &sj, t).unwrap()
            })
            .collect();
        let slope = logs[1] - logs[0];
        prop_assert!(slope < 0.0);
        for (k, l) in logs.iter().enumerate() {
            prop_assert!((l - (k + 1) as f64 * slope).abs() <= 1e-9 * (k + 1) as f64);
        }
    }

    #[test]
    fn com_is_affine_and_momentum_conserved(packets in prop::collection::vec(packet_strategy(), 1..8), t in -4.0f64..4.0) {
        let state = GaussianPointerState::new(packets, 0).unwrap();
        let times: Vec<f64> = (0..9).map(|k| -2.0 + 0.5 * k as f64).collect();
        let traj = com_trajectory(&state, &times).unwrap();
        let (xs, ys): (Vec<f64>, Vec<f64>) = traj.iter().map(|p| (p.t, p.r_cm)).unzip();
        let slope = macrocell::observables::least_squares_slope(&xs, &ys).unwrap();
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        let residual = xs.iter().zip(&ys).map(|(x, y)| (y - (my + slope * (x - mx))).abs()).fold(0.0, f64::max);
        prop_assert!(residual <= 1e-12);
        prop_assert!((slope - state.com_velocity()).abs() <= 1e-10);
        let later = free_evolve(&state, t).unwrap();
        prop_assert_eq!(total_momentum(&later), total_momentum(&state));
    }
}
