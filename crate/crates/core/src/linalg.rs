//! Dense complex linear-algebra kernels used across the crate: Hermitian
//! eigendecomposition (cyclic Jacobi), pivoted Householder QR least squares,
//! pseudo-inverse solves, and Hermitian inverse square roots.
//!
//! Everything here is deterministic: fixed sweep and summation order, no
//! threading, so identical inputs give bit-identical outputs.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Machine-epsilon scale used for rank decisions.
pub const EPS: f64 = f64::EPSILON;

/// Conjugate transpose.
pub fn adjoint(a: &Array2<Complex64>) -> Array2<Complex64> {
    let mut out = Array2::zeros((a.ncols(), a.nrows()));
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            out[(j, i)] = a[(i, j)].conj();
        }
    }
    out
}

/// Frobenius norm.
pub fn frob(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Frobenius norm of A - A^H (zero iff exactly Hermitian).
pub fn hermitian_defect(a: &Array2<Complex64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let d = a[(i, j)] - a[(j, i)].conj();
            acc += d.norm_sqr();
        }
    }
    acc.sqrt()
}

/// (A + A^H) / 2.
pub fn hermitian_part(a: &Array2<Complex64>) -> Array2<Complex64> {
    let n = a.nrows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
        }
    }
    out
}

pub fn identity(n: usize) -> Array2<Complex64> {
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        out[(i, i)] = Complex64::new(1.0, 0.0);
    }
    out
}

/// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching eigenvector
/// columns. Iteration stops when the off-diagonal Frobenius mass drops below
/// `1e-12 * ||A||_F` or after 100 sweeps. The input is taken as-is; callers
/// validate Hermitian-ness at their own tolerance.
pub fn hermitian_eig(a: &Array2<Complex64>) -> (Vec<f64>, Array2<Complex64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "hermitian_eig needs a square matrix");
    let mut w = a.clone();
    let mut v = identity(n);
    if n <= 1 {
        let lam = if n == 1 { vec![w[(0, 0)].re] } else { vec![] };
        return (lam, v);
    }

    let norm_a = frob(&w);
    let stop = 1e-12 * norm_a;

    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += w[(i, j)].norm_sqr();
                }
            }
        }
        if off.sqrt() <= stop {
            break;
        }

        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = w[(p, q)];
                let b = apq.norm();
                if b <= stop / (n as f64) || b == 0.0 {
                    continue;
                }
                let phase = apq / b; // e^{i phi}
                let alpha = w[(p, p)].re;
                let gamma = w[(q, q)].re;
                let tau = (gamma - alpha) / (2.0 * b);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Unitary U: U[p,p]=c, U[p,q]=s, U[q,p]=-s e^{-i phi}, U[q,q]=c e^{-i phi}
                let se_m = phase.conj() * s; // s e^{-i phi}
                let ce_m = phase.conj() * c; // c e^{-i phi}

                // A <- U^H A (rows p, q)
                for j in 0..n {
                    let apj = w[(p, j)];
                    let aqj = w[(q, j)];
                    w[(p, j)] = apj * c - aqj * (phase * s);
                    w[(q, j)] = apj * s + aqj * (phase * c);
                }
                // A <- A U (columns p, q)
                for i in 0..n {
                    let aip = w[(i, p)];
                    let aiq = w[(i, q)];
                    w[(i, p)] = aip * c - aiq * se_m;
                    w[(i, q)] = aip * s + aiq * ce_m;
                }
                // V <- V U
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = vip * c - viq * se_m;
                    v[(i, q)] = vip * s + viq * ce_m;
                }
                // Clean up rounding drift on the annihilated pair.
                w[(p, q)] = 0.5 * (w[(p, q)] + w[(q, p)].conj());
                w[(q, p)] = w[(p, q)].conj();
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| w[(i, i)].re).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap());

    let eigenvalues: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            vectors[(i, dst)] = v[(i, src)];
        }
    }
    (eigenvalues, vectors)
}

/// Column-pivoted Householder QR of a complex matrix.
///
/// Built once, reusable for many right-hand sides (the reconstruction
/// operators are fixed per plan while the measurements change per trial).
pub struct QrPivot {
    /// Householder vectors, reflector k acting on rows k..m.
    reflectors: Vec<(Array1<Complex64>, f64)>,
    /// Upper-triangular factor (n x n, permuted columns).
    r: Array2<Complex64>,
    /// Column permutation: solution index perm[j] receives x'[j].
    perm: Vec<usize>,
    m: usize,
    n: usize,
}

impl QrPivot {
    pub fn new(a: &Array2<Complex64>) -> Self {
        let m = a.nrows();
        let n = a.ncols();
        let steps = m.min(n);
        let mut w = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut reflectors = Vec::with_capacity(steps);

        for k in 0..steps {
            // Pivot: remaining column with the largest trailing norm.
            let mut best = k;
            let mut best_norm = 0.0;
            for j in k..n {
                let nj: f64 = (k..m).map(|i| w[(i, j)].norm_sqr()).sum();
                if nj > best_norm {
                    best_norm = nj;
                    best = j;
                }
            }
            if best != k {
                for i in 0..m {
                    let tmp = w[(i, k)];
                    w[(i, k)] = w[(i, best)];
                    w[(i, best)] = tmp;
                }
                perm.swap(k, best);
            }

            let normx = best_norm.sqrt();
            if normx == 0.0 {
                reflectors.push((Array1::zeros(m - k), 0.0));
                continue;
            }

            let x0 = w[(k, k)];
            let phase = if x0.norm() > 0.0 {
                x0 / x0.norm()
            } else {
                Complex64::new(1.0, 0.0)
            };
            let alpha = -phase * normx;
            let mut vvec: Array1<Complex64> = Array1::zeros(m - k);
            for i in k..m {
                vvec[i - k] = w[(i, k)];
            }
            vvec[0] -= alpha;
            let vnorm2: f64 = vvec.iter().map(|z| z.norm_sqr()).sum();
            let beta = if vnorm2 > 0.0 { 2.0 / vnorm2 } else { 0.0 };

            // Apply H = I - beta v v^H to the trailing columns.
            for j in k..n {
                let mut dot = Complex64::new(0.0, 0.0);
                for i in k..m {
                    dot += vvec[i - k].conj() * w[(i, j)];
                }
                let f = dot * beta;
                for i in k..m {
                    let upd = vvec[i - k] * f;
                    w[(i, j)] -= upd;
                }
            }
            w[(k, k)] = alpha;
            for i in k + 1..m {
                w[(i, k)] = Complex64::new(0.0, 0.0);
            }
            reflectors.push((vvec, beta));
        }

        let mut r = Array2::zeros((steps, n));
        for i in 0..steps {
            for j in 0..n {
                r[(i, j)] = w[(i, j)];
            }
        }
        QrPivot {
            reflectors,
            r,
            perm,
            m,
            n,
        }
    }

    /// Numerical rank: diagonal entries above `rel_tol * |r_00|`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let steps = self.reflectors.len();
        if steps == 0 {
            return 0;
        }
        let r00 = self.r[(0, 0)].norm();
        if r00 == 0.0 {
            return 0;
        }
        (0..steps)
            .take_while(|&k| self.r[(k, k)].norm() > rel_tol * r00)
            .count()
    }

    /// Default rank tolerance: `max(m, n) * eps`.
    pub fn default_rank(&self) -> usize {
        self.rank(self.m.max(self.n) as f64 * EPS)
    }

    /// `|r_00| / |r_kk|` over the numerically nonzero diagonal; a cheap
    /// estimate of the 2-norm condition number.
    pub fn condition_estimate(&self) -> f64 {
        let rank = self.default_rank();
        if rank == 0 {
            return f64::INFINITY;
        }
        let r00 = self.r[(0, 0)].norm();
        let rkk = self.r[(rank - 1, rank - 1)].norm();
        if rkk == 0.0 {
            f64::INFINITY
        } else {
            r00 / rkk
        }
    }

    /// Q^H b for a stacked RHS matrix.
    fn apply_qh(&self, b: &Array2<Complex64>) -> Array2<Complex64> {
        let mut y = b.clone();
        let m = self.m;
        for (k, (vvec, beta)) in self.reflectors.iter().enumerate() {
            if *beta == 0.0 {
                continue;
            }
            for j in 0..y.ncols() {
                let mut dot = Complex64::new(0.0, 0.0);
                for i in k..m {
                    dot += vvec[i - k].conj() * y[(i, j)];
                }
                let f = dot * *beta;
                for i in k..m {
                    let upd = vvec[i - k] * f;
                    y[(i, j)] -= upd;
                }
            }
        }
        y
    }

    /// Least-squares solve; requires full column rank.
    pub fn solve(&self, b: &Array2<Complex64>) -> Result<Array2<Complex64>> {
        if b.nrows() != self.m {
            return Err(Error::Dimension {
                expected: format!("{} rows", self.m),
                got: format!("{} rows", b.nrows()),
            });
        }
        let rank = self.default_rank();
        if rank < self.n {
            return Err(Error::Identifiability {
                rank,
                required: self.n,
                condition: self.condition_estimate(),
            });
        }
        let y = self.apply_qh(b);
        let ncols = b.ncols();
        let mut xp = Array2::zeros((self.n, ncols));
        for j in 0..ncols {
            for k in (0..self.n).rev() {
                let mut acc = y[(k, j)];
                for l in k + 1..self.n {
                    acc -= self.r[(k, l)] * xp[(l, j)];
                }
                xp[(k, j)] = acc / self.r[(k, k)];
            }
        }
        let mut x = Array2::zeros((self.n, ncols));
        for j in 0..ncols {
            for k in 0..self.n {
                x[(self.perm[k], j)] = xp[(k, j)];
            }
        }
        Ok(x)
    }
}

/// Singular values of `a` (ascending), estimated through the eigenvalues of
/// the Gram matrix A^H A. Adequate down to about `sqrt(eps) * sigma_max`,
/// which covers the conditioning range this crate accepts.
pub fn singular_values(a: &Array2<Complex64>) -> Vec<f64> {
    let g = adjoint(a).dot(a);
    let (lam, _) = hermitian_eig(&g);
    lam.into_iter().map(|l| l.max(0.0).sqrt()).collect()
}

/// Rank and condition estimate from the singular values of `a`.
pub fn rank_and_condition(a: &Array2<Complex64>) -> (usize, f64) {
    let sv = singular_values(a);
    let smax = sv.last().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return (0, f64::INFINITY);
    }
    let tol = smax * (a.nrows().max(a.ncols()) as f64) * EPS.sqrt();
    let rank = sv.iter().filter(|&&s| s > tol).count();
    let smin = sv
        .iter()
        .copied()
        .find(|&s| s > tol)
        .unwrap_or(f64::INFINITY);
    (rank, smax / smin)
}

/// Minimum-norm least-squares solution via the pseudo-inverse of the Gram
/// matrix: x = (A^H A)^+ A^H b. Used only when a caller explicitly opts in
/// to rank-deficient solves.
pub fn pinv_solve(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Array2<Complex64> {
    let g = adjoint(a).dot(a);
    let (lam, v) = hermitian_eig(&g);
    let lmax = lam.last().copied().unwrap_or(0.0).max(0.0);
    let tol = lmax * (g.nrows() as f64) * EPS;
    let ahb = adjoint(a).dot(b);
    let n = g.nrows();
    let mut x = Array2::zeros((n, b.ncols()));
    for (k, &l) in lam.iter().enumerate() {
        if l <= tol {
            continue;
        }
        for j in 0..b.ncols() {
            let mut proj = Complex64::new(0.0, 0.0);
            for i in 0..n {
                proj += v[(i, k)].conj() * ahb[(i, j)];
            }
            let f = proj / l;
            for i in 0..n {
                let upd = v[(i, k)] * f;
                x[(i, j)] += upd;
            }
        }
    }
    x
}

/// Inverse square root of a Hermitian positive-definite matrix.
///
/// Errors if the smallest eigenvalue is not safely positive, since dividing
/// by it would amplify noise without bound.
pub fn hermitian_inv_sqrt(b: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    let (lam, v) = hermitian_eig(b);
    let lmax = lam.last().copied().unwrap_or(0.0);
    let floor = lmax * (b.nrows() as f64) * 1e3 * EPS;
    if lam.first().copied().unwrap_or(0.0) <= floor {
        return Err(Error::Domain(format!(
            "whitening factor is singular: min eigenvalue {:.3e} vs max {:.3e}",
            lam.first().copied().unwrap_or(0.0),
            lmax
        )));
    }
    let n = b.nrows();
    let mut out = Array2::zeros((n, n));
    for (k, &l) in lam.iter().enumerate() {
        let w = 1.0 / l.sqrt();
        for i in 0..n {
            for j in 0..n {
                let upd = v[(i, k)] * v[(j, k)].conj() * w;
                out[(i, j)] += upd;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use rand::Rng;

    fn random_hermitian(n: usize, seed: u64) -> Array2<Complex64> {
        let mut rng = rng_for(seed, &[n as u64]);
        let mut a = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            }
        }
        hermitian_part(&a)
    }

    #[test]
    fn eig_diagonal_matrix() {
        let mut a = Array2::zeros((3, 3));
        a[(0, 0)] = Complex64::new(3.0, 0.0);
        a[(1, 1)] = Complex64::new(1.0, 0.0);
        a[(2, 2)] = Complex64::new(2.0, 0.0);
        let (lam, v) = hermitian_eig(&a);
        assert_eq!(lam, vec![1.0, 2.0, 3.0]);
        // Eigenvectors are permuted identity columns.
        for (k, &col) in [1usize, 2, 0].iter().enumerate() {
            assert!((v[(col, k)].norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn eig_residual_and_orthonormality() {
        for seed in 0..5u64 {
            let n = 6;
            let a = random_hermitian(n, 100 + seed);
            let (lam, v) = hermitian_eig(&a);
            let norm_a = frob(&a);
            // R V = V diag(lam)
            let av = a.dot(&v);
            let mut res = 0.0f64;
            for j in 0..n {
                for i in 0..n {
                    res += (av[(i, j)] - v[(i, j)] * lam[j]).norm_sqr();
                }
            }
            assert!(res.sqrt() <= 1e-8 * norm_a, "residual too large");
            // V^H V = I
            let vhv = adjoint(&v).dot(&v);
            let mut dev = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    let target = if i == j { 1.0 } else { 0.0 };
                    dev += (vhv[(i, j)] - Complex64::new(target, 0.0)).norm_sqr();
                }
            }
            assert!(dev.sqrt() <= 1e-8);
            // Ascending
            for k in 1..n {
                assert!(lam[k] >= lam[k - 1]);
            }
        }
    }

    #[test]
    fn eig_matches_nalgebra_oracle() {
        // Independent oracle: nalgebra's Hermitian eigensolver.
        for seed in 0..4u64 {
            let n = 6;
            let a = random_hermitian(n, 300 + seed);
            let (lam, _) = hermitian_eig(&a);
            let mut na = nalgebra::DMatrix::<nalgebra::Complex<f64>>::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    na[(i, j)] = nalgebra::Complex::new(a[(i, j)].re, a[(i, j)].im);
                }
            }
            let mut oracle: Vec<f64> = na.symmetric_eigen().eigenvalues.iter().copied().collect();
            oracle.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for (got, want) in lam.iter().zip(oracle.iter()) {
                assert!((got - want).abs() < 1e-6, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn qr_solves_exact_system() {
        let mut rng = rng_for(7, &[]);
        let m = 10;
        let n = 4;
        let a = Array2::from_shape_fn((m, n), |_| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let x_true = Array2::from_shape_fn((n, 2), |_| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let b = a.dot(&x_true);
        let qr = QrPivot::new(&a);
        assert_eq!(qr.default_rank(), n);
        let x = qr.solve(&b).unwrap();
        for i in 0..n {
            for j in 0..2 {
                assert!((x[(i, j)] - x_true[(i, j)]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn qr_reports_rank_deficiency() {
        let mut rng = rng_for(8, &[]);
        let m = 8;
        let a0 = Array2::from_shape_fn((m, 2), |_| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        // Third column = sum of the first two.
        let mut a = Array2::zeros((m, 3));
        for i in 0..m {
            a[(i, 0)] = a0[(i, 0)];
            a[(i, 1)] = a0[(i, 1)];
            a[(i, 2)] = a0[(i, 0)] + a0[(i, 1)];
        }
        let qr = QrPivot::new(&a);
        assert_eq!(qr.default_rank(), 2);
        let b = Array2::zeros((m, 1));
        assert!(matches!(
            qr.solve(&b),
            Err(Error::Identifiability { rank: 2, .. })
        ));
    }

    #[test]
    fn pinv_matches_qr_on_full_rank() {
        let mut rng = rng_for(9, &[]);
        let a = Array2::from_shape_fn((9, 3), |_| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let b = Array2::from_shape_fn((9, 1), |_| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let x1 = QrPivot::new(&a).solve(&b).unwrap();
        let x2 = pinv_solve(&a, &b);
        for i in 0..3 {
            assert!((x1[(i, 0)] - x2[(i, 0)]).norm() < 1e-9);
        }
    }

    #[test]
    fn inv_sqrt_whitens() {
        let a = random_hermitian(4, 11);
        // Make it positive definite.
        let mut b = a.clone();
        for i in 0..4 {
            b[(i, i)] += Complex64::new(3.0, 0.0);
        }
        let q = hermitian_inv_sqrt(&b).unwrap();
        let prod = q.dot(&b).dot(&q);
        for i in 0..4 {
            for j in 0..4 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - Complex64::new(target, 0.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn singular_values_of_isometry() {
        // Columns of a scaled identity block have known singular values.
        let mut a = Array2::zeros((5, 2));
        a[(0, 0)] = Complex64::new(2.0, 0.0);
        a[(3, 1)] = Complex64::new(0.5, 0.0);
        let sv = singular_values(&a);
        assert!((sv[0] - 0.5).abs() < 1e-12);
        assert!((sv[1] - 2.0).abs() < 1e-12);
        let (rank, cond) = rank_and_condition(&a);
        assert_eq!(rank, 2);
        assert!((cond - 4.0).abs() < 1e-9);
    }
}
