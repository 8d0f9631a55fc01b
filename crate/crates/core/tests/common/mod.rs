//! Helpers shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use pyrotune::linss::DaeJacobians;
use rand::Rng;

pub fn uniform<R: Rng>(rng: &mut R, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-scale..scale))
}

/// Random block set with diagonally dominant `fx` and `gy`, so that both the
/// algebraic Jacobian and the reduced state matrix are well conditioned.
pub fn random_dae<R: Rng>(rng: &mut R, n: usize, m: usize, p: usize, q: usize) -> DaeJacobians {
    let dominant = |rng: &mut R, k: usize| {
        let mut a = uniform(rng, k, k, 1.0);
        for i in 0..k {
            a[(i, i)] = -(k as f64 + 1.0 + rng.random_range(0.0..2.0));
        }
        a
    };
    DaeJacobians {
        fx: dominant(rng, n),
        fy: uniform(rng, n, m, 0.3),
        fu: uniform(rng, n, p, 1.0),
        gx: uniform(rng, m, n, 0.3),
        gy: dominant(rng, m),
        gu: uniform(rng, m, p, 1.0),
        hx: uniform(rng, q, n, 1.0),
        hy: uniform(rng, q, m, 1.0),
        hu: uniform(rng, q, p, 1.0),
        input_names: Vec::new(),
        output_names: Vec::new(),
    }
}

/// Steady-state gain from one solve of the full linear DAE
/// `[fx fy; gx gy] [x; y] = -[fu; gu] u`, `z = hx x + hy y + hu u`.
pub fn direct_dc_gain(j: &DaeJacobians) -> DMatrix<f64> {
    let (n, m, p) = (j.fx.nrows(), j.gy.nrows(), j.fu.ncols());
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(&j.fx);
    k.view_mut((0, n), (n, m)).copy_from(&j.fy);
    k.view_mut((n, 0), (m, n)).copy_from(&j.gx);
    k.view_mut((n, n), (m, m)).copy_from(&j.gy);
    let mut rhs = DMatrix::zeros(n + m, p);
    rhs.view_mut((0, 0), (n, p)).copy_from(&(-&j.fu));
    rhs.view_mut((n, 0), (m, p)).copy_from(&(-&j.gu));
    let w = k.lu().solve(&rhs).expect("nonsingular");
    &j.hx * w.rows(0, n) + &j.hy * w.rows(n, m) + &j.hu
}

pub fn random_complex<R: Rng>(rng: &mut R, n: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

pub fn real(m: &[&[f64]]) -> DMatrix<Complex64> {
    DMatrix::from_fn(m.len(), m[0].len(), |i, j| Complex64::new(m[i][j], 0.0))
}

/// Minimum of `sum |phi[i, perm[i]]|` over all permutations.
pub fn brute_force_assignment(phi: &DMatrix<Complex64>) -> (f64, Vec<usize>) {
    let n = phi.nrows();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = (f64::INFINITY, perm.clone());
    permute(&mut perm, 0, &mut |p| {
        let cost: f64 = p.iter().enumerate().map(|(i, &j)| phi[(i, j)].norm()).sum();
        if cost < best.0 {
            best = (cost, p.to_vec());
        }
    });
    best
}

fn permute(p: &mut [usize], k: usize, f: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}
