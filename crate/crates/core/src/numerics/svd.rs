//! One-sided (Hestenes) Jacobi SVD for small complex matrices.

use super::{CMatrix, C64};

/// Compact SVD `A = U diag(S) V^H` with `k = min(rows, cols)` singular triplets.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `rows x k`, orthonormal columns.
    pub u: CMatrix,
    /// Descending, non-negative.
    pub s: Vec<f64>,
    /// `cols x k`, orthonormal columns.
    pub v: CMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> CMatrix {
        let s: Vec<C64> = self.s.iter().map(|&x| C64::new(x, 0.0)).collect();
        &(&self.u * &CMatrix::diag(&s)) * &self.v.adjoint()
    }

    /// Number of singular values above `tol * s[0]`.
    pub fn rank(&self, tol: f64) -> usize {
        match self.s.first() {
            Some(&s0) if s0 > 0.0 => self.s.iter().filter(|&&x| x > tol * s0).count(),
            _ => 0,
        }
    }
}

const MAX_SWEEPS: usize = 80;

pub fn svd_compact(a: &CMatrix) -> Svd {
    assert!(a.rows() > 0 && a.cols() > 0, "svd of an empty matrix");
    if a.rows() >= a.cols() {
        tall_svd(a)
    } else {
        let t = tall_svd(&a.adjoint());
        Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        }
    }
}

fn tall_svd(a: &CMatrix) -> Svd {
    let (m, n) = a.shape();
    // columns stored contiguously for the rotations
    let mut w: Vec<Vec<C64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<C64>> = (0..n)
        .map(|j| {
            let mut e = vec![C64::new(0.0, 0.0); n];
            e[j] = C64::new(1.0, 0.0);
            e
        })
        .collect();

    let eps = f64::EPSILON;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha: f64 = w[p].iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = w[q].iter().map(|z| z.norm_sqr()).sum();
                let gamma: C64 = w[p].iter().zip(&w[q]).map(|(x, y)| x.conj() * y).sum();
                let g = gamma.norm();
                if g == 0.0 || g <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma / g; // e^{j theta}
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let ph = phase.conj();
                rotate(&mut w, p, q, c, s, ph);
                rotate(&mut v, p, q, c, s, ph);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = w
        .iter()
        .map(|col| col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let smax = norms.iter().cloned().fold(0.0, f64::max);
    let null_tol = smax * (m.max(n) as f64) * eps;
    let mut u_cols: Vec<Vec<C64>> = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut v_cols = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        let sigma = norms[j];
        if sigma > null_tol && sigma > 0.0 {
            u_cols.push(w[j].iter().map(|z| z / sigma).collect());
            s.push(sigma);
        } else {
            u_cols.push(vec![C64::new(0.0, 0.0); m]);
            s.push(0.0);
            deficient.push(k);
        }
        v_cols.push(v[j].clone());
    }
    for k in deficient {
        u_cols[k] = orthonormal_completion(&u_cols, k, m);
    }

    let mut u = CMatrix::zeros(m, n);
    let mut vm = CMatrix::zeros(n, n);
    for k in 0..n {
        u.set_column(k, &u_cols[k]);
        vm.set_column(k, &v_cols[k]);
    }
    Svd { u, s, v: vm }
}

/// Applies `[p q] <- [p q] * [[c, s], [-s e, c e]]` with `e = ph`, a unitary column rotation.
fn rotate(cols: &mut [Vec<C64>], p: usize, q: usize, c: f64, s: f64, ph: C64) {
    let (left, right) = cols.split_at_mut(q);
    let cp = &mut left[p];
    let cq = &mut right[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let yp = *y * ph;
        let nx = *x * c - yp * s;
        let ny = *x * s + yp * c;
        *x = nx;
        *y = ny;
    }
}

/// A unit vector orthogonal to every other nonzero column (Gram-Schmidt on the standard basis).
fn orthonormal_completion(cols: &[Vec<C64>], skip: usize, m: usize) -> Vec<C64> {
    for e in 0..m {
        let mut cand = vec![C64::new(0.0, 0.0); m];
        cand[e] = C64::new(1.0, 0.0);
        // two passes of modified Gram-Schmidt for stability
        for _ in 0..2 {
            for (k, col) in cols.iter().enumerate() {
                if k == skip {
                    continue;
                }
                let proj: C64 = col.iter().zip(&cand).map(|(a, b)| a.conj() * b).sum();
                for (c, a) in cand.iter_mut().zip(col) {
                    *c -= proj * a;
                }
            }
        }
        let norm = cand.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return cand.into_iter().map(|z| z / norm).collect();
        }
    }
    unreachable!("an m-dimensional space has room for a completion vector")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn random_matrix(rng: &mut RngStream, m: usize, n: usize) -> CMatrix {
        CMatrix::from_fn(m, n, |_, _| rng.complex_normal(2.0))
    }

    fn orthonormality_error(q: &CMatrix) -> f64 {
        let g = q.adjoint_mul(q).unwrap();
        g.max_abs_diff(&CMatrix::identity(q.cols()))
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let svd = svd_compact(&CMatrix::identity(3));
        assert_eq!(svd.s.len(), 3);
        for s in &svd.s {
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn diagonal_case() {
        let a = CMatrix::diag(&[C64::new(3.0, 0.0), C64::new(2.0, 0.0)]);
        let svd = svd_compact(&a);
        assert!((svd.s[0] - 3.0).abs() < 1e-15 && (svd.s[1] - 2.0).abs() < 1e-15);
        // columns of U and V are signed/phased unit vectors of the identity
        for k in 0..2 {
            assert!((svd.u[(k, k)].norm() - 1.0).abs() < 1e-14);
            assert!((svd.v[(k, k)].norm() - 1.0).abs() < 1e-14);
        }
        assert!(svd.reconstruct().max_abs_diff(&a) < 1e-14);
    }

    #[test]
    fn reconstruction_on_random_matrices() {
        let mut rng = RngStream::new(77, 0);
        for trial in 0..100 {
            let m = 1 + rng.below(32);
            let n = 1 + rng.below(16);
            let (m, n) = if trial % 2 == 0 { (m, n) } else { (n, m) };
            let a = random_matrix(&mut rng, m, n);
            let svd = svd_compact(&a);
            let err = svd.reconstruct().try_sub(&a).unwrap().frob_norm() / a.frob_norm();
            assert!(err < 1e-10, "{m}x{n}: relative error {err}");
            assert!(orthonormality_error(&svd.u) < 1e-10);
            assert!(orthonormality_error(&svd.v) < 1e-10);
            assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn random_4x3() {
        let mut rng = RngStream::new(4, 3);
        let a = random_matrix(&mut rng, 4, 3);
        let svd = svd_compact(&a);
        assert_eq!(svd.u.shape(), (4, 3));
        assert_eq!(svd.v.shape(), (3, 3));
        let err = svd.reconstruct().try_sub(&a).unwrap().frob_norm() / a.frob_norm();
        assert!(err < 1e-10);
    }

    #[test]
    fn rank_deficient_keeps_orthonormal_u() {
        let mut rng = RngStream::new(5, 5);
        let x = random_matrix(&mut rng, 6, 1);
        let y = random_matrix(&mut rng, 1, 4);
        let a = &x * &y;
        let svd = svd_compact(&a);
        assert_eq!(svd.rank(1e-10), 1);
        assert!(orthonormality_error(&svd.u) < 1e-10);
        assert!(svd.reconstruct().max_abs_diff(&a) < 1e-12);
    }

    #[test]
    fn zero_matrix() {
        let svd = svd_compact(&CMatrix::zeros(3, 2));
        assert_eq!(svd.s, vec![0.0, 0.0]);
        assert!(orthonormality_error(&svd.u) < 1e-12);
    }
}
