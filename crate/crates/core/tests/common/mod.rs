//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use macrocell::hilbert::ManyBodyOperator;
use macrocell::C64;
use nalgebra::DMatrix;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn pauli(label: char) -> DMatrix<C64> {
    let z = c(0.0, 0.0);
    let o = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    match label {
        'i' => DMatrix::from_row_slice(2, 2, &[o, z, z, o]),
        'x' => DMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        'y' => DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        'z' => DMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
        _ => unreachable!(),
    }
}

/// Site 0 leftmost in the Kronecker product.
pub fn chain_term(f: usize, ops: &[(usize, char)]) -> DMatrix<C64> {
    (0..f).fold(DMatrix::from_element(1, 1, c(1.0, 0.0)), |acc, site| {
        let label = ops.iter().find(|(s, _)| *s == site).map_or('i', |(_, l)| *l);
        acc.kronecker(&pauli(label))
    })
}

pub fn oracle_tfim(f: usize, j: f64, h: f64) -> DMatrix<C64> {
    let dim = 1 << f;
    let mut m = DMatrix::from_element(dim, dim, c(0.0, 0.0));
    for k in 0..f - 1 {
        m -= chain_term(f, &[(k, 'z'), (k + 1, 'z')]) * c(j, 0.0);
    }
    for k in 0..f {
        m -= chain_term(f, &[(k, 'x')]) * c(h, 0.0);
    }
    m
}

pub fn oracle_xxz(f: usize, j: f64, delta: f64) -> DMatrix<C64> {
    let dim = 1 << f;
    let mut m = DMatrix::from_element(dim, dim, c(0.0, 0.0));
    for k in 0..f - 1 {
        m += chain_term(f, &[(k, 'x'), (k + 1, 'x')]) * c(j, 0.0);
        m += chain_term(f, &[(k, 'y'), (k + 1, 'y')]) * c(j, 0.0);
        m += chain_term(f, &[(k, 'z'), (k + 1, 'z')]) * c(j * delta, 0.0);
    }
    m
}

pub fn to_nalgebra(op: &ManyBodyOperator) -> DMatrix<C64> {
    let m = op.matrix();
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn sorted_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let mut e: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

/// Composite Simpson rule.
pub fn simpson(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> C64) -> C64 {
    let n = n + n % 2;
    let h = (hi - lo) / n as f64;
    let mut sum = f(lo) + f(hi);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += f(lo + k as f64 * h) * w;
    }
    sum * (h / 3.0)
}

