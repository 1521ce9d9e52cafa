//! Small dense linear-algebra helpers shared across the toolkit.
//!
//! Everything here operates on `nalgebra` dynamic matrices at desk scale
//! (dimensions in the tens), so clarity wins over asymptotics.

use nalgebra::{DMatrix, DVector};

/// Length of the scaled symmetric vectorization of an `n x n` matrix.
pub fn svec_dim(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Scaled symmetric vectorization: off-diagonal entries are multiplied by
/// sqrt(2) so that `svec(a) . svec(b) == <a, b>` (Frobenius inner product).
pub fn svec(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "svec needs a square matrix");
    let mut v = DVector::zeros(svec_dim(n));
    let mut k = 0;
    let s2 = std::f64::consts::SQRT_2;
    for j in 0..n {
        for i in 0..=j {
            v[k] = if i == j { m[(i, j)] } else { s2 * m[(i, j)] };
            k += 1;
        }
    }
    v
}

/// Inverse of [`svec`].
pub fn smat(v: &DVector<f64>, n: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), svec_dim(n), "smat length mismatch");
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    let inv_s2 = 1.0 / std::f64::consts::SQRT_2;
    for j in 0..n {
        for i in 0..=j {
            let x = if i == j { v[k] } else { v[k] * inv_s2 };
            m[(i, j)] = x;
            m[(j, i)] = x;
            k += 1;
        }
    }
    m
}

/// 0.5 (M + M^T).
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

/// Basis of the symmetric matrices: `E_jj` on the diagonal and
/// `E_ij + E_ji` off it, ordered like [`svec`] (column-major upper triangle).
/// A symmetric matrix variable is the sum of coordinates times these.
pub fn sym_basis(n: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(svec_dim(n));
    for j in 0..n {
        for i in 0..=j {
            let mut m = DMatrix::zeros(n, n);
            m[(i, j)] = 1.0;
            m[(j, i)] = 1.0;
            out.push(m);
        }
    }
    out
}

/// Rebuild a symmetric matrix from coordinates in the [`sym_basis`] order.
pub fn sym_from_coords(coords: &[f64], n: usize) -> DMatrix<f64> {
    assert_eq!(coords.len(), svec_dim(n));
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in 0..=j {
            m[(i, j)] = coords[k];
            m[(j, i)] = coords[k];
            k += 1;
        }
    }
    m
}

/// Tr(A B) for matrices of equal shape with B symmetric (elementwise form).
pub fn trace_product_of(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.nrows(), b.nrows());
    debug_assert_eq!(a.ncols(), b.ncols());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Largest absolute entry of `M - M^T`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let d = m - m.transpose();
    d.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    let mut ev = m.clone().symmetric_eigenvalues();
    let mut v: Vec<f64> = ev.iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (i, x) in v.into_iter().enumerate() {
        ev[i] = x;
    }
    ev
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eig(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |acc, &x| acc.min(x))
}

/// PSD test with absolute tolerance on the smallest eigenvalue.
pub fn is_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    min_eig(m) >= -tol
}

/// Factor `B` with `S = B B^T` for a PSD matrix, via symmetric
/// eigendecomposition (works for singular `S`; Cholesky does not).
///
/// Fails if an eigenvalue is below `-tol * scale`.
pub fn psd_sqrt_factor(s: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>, String> {
    let n = s.nrows();
    assert_eq!(n, s.ncols());
    let eig = symmetrize(s).symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(1.0_f64, |a, &x| a.max(x.abs()));
    let mut b = eig.eigenvectors.clone();
    for j in 0..n {
        let lam = eig.eigenvalues[j];
        if lam < -tol * scale {
            return Err(format!("matrix is not PSD: eigenvalue {lam:.3e}"));
        }
        let f = lam.max(0.0).sqrt();
        for i in 0..n {
            b[(i, j)] *= f;
        }
    }
    Ok(b)
}

/// Quadratic form `x^T D^+ x` for PSD `D`, with the convention that the value
/// is `None` (read: +inf) when `x` has a component outside `range(D)`.
///
/// Solves `(D + jitter I) w = x` by Cholesky and rejects when the residual
/// `D w - x` shows an unresolved null-space component.
pub fn psd_inv_quad_form(d: &DMatrix<f64>, x: &DVector<f64>, jitter: f64) -> Option<f64> {
    let n = d.nrows();
    assert_eq!(n, d.ncols());
    assert_eq!(n, x.len());
    if x.iter().all(|v| *v == 0.0) {
        return Some(0.0);
    }
    let scale = d.iter().fold(1.0_f64, |a, &v| a.max(v.abs()));
    let mut reg = d.clone();
    for i in 0..n {
        reg[(i, i)] += jitter * scale.max(1.0);
    }
    let chol = reg.cholesky()?;
    let w = chol.solve(x);
    let resid = d * &w - x;
    if resid.norm() > 1e-5 * x.norm() {
        return None; // x leaves range(D): the underlying supremum is +inf
    }
    Some(x.dot(&w))
}

/// Solve `M w = rhs` for symmetric positive semidefinite `M`, escalating a
/// diagonal jitter until Cholesky succeeds. Returns `None` if even a large
/// jitter fails (indefinite input).
pub fn chol_solve_jitter(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let n = m.nrows();
    let scale = m.iter().fold(1.0_f64, |a, &v| a.max(v.abs()));
    let mut jitter = 0.0;
    for _ in 0..8 {
        let mut reg = m.clone();
        for i in 0..n {
            reg[(i, i)] += jitter;
        }
        if let Some(ch) = reg.cholesky() {
            return Some(ch.solve(rhs));
        }
        jitter = if jitter == 0.0 { 1e-12 * scale.max(1.0) } else { jitter * 100.0 };
    }
    None
}

/// Result of a ball-constrained quadratic maximization.
#[derive(Debug, Clone)]
pub struct BallMax {
    pub argmax: DVector<f64>,
    pub value: f64,
}

/// Maximize `x^T P x + q^T x` over the ball `|x| <= radius` (P symmetric,
/// any signature). Exact up to bisection tolerance; handles the hard case.
pub fn max_quadratic_on_ball(p: &DMatrix<f64>, q: &DVector<f64>, radius: f64) -> BallMax {
    let n = p.nrows();
    assert_eq!(n, p.ncols());
    assert_eq!(n, q.len());
    assert!(radius >= 0.0);
    if radius == 0.0 {
        return BallMax { argmax: DVector::zeros(n), value: 0.0 };
    }
    let eig = symmetrize(p).symmetric_eigen();
    let lam = &eig.eigenvalues;
    let v = &eig.eigenvectors;
    let qt = v.transpose() * q;
    let lam_max = lam.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x));

    let eval = |u: &DVector<f64>| -> f64 {
        let x = v * u;
        x.dot(&(p * &x)) + q.dot(&x)
    };

    let mut best: Option<BallMax> = None;
    let mut consider = |u: DVector<f64>, val: f64| {
        if best.as_ref().map_or(true, |b| val > b.value) {
            best = Some(BallMax { argmax: v * u, value: val });
        }
    };

    // Interior stationary point exists only when P is negative definite.
    if lam_max < 0.0 {
        let u: DVector<f64> = DVector::from_iterator(n, (0..n).map(|i| -qt[i] / (2.0 * lam[i])));
        if u.norm() <= radius {
            let val = eval(&u);
            consider(u, val);
        }
    }

    // Boundary: (lam_i - omega) u_i = -qt_i / 2 with omega >= lam_max.
    let norm_at = |omega: f64| -> f64 {
        (0..n)
            .map(|i| {
                let d = omega - lam[i];
                if d <= 0.0 { f64::INFINITY } else { (qt[i] / (2.0 * d)).powi(2) }
            })
            .sum::<f64>()
            .sqrt()
    };
    let u_at = |omega: f64| -> DVector<f64> {
        DVector::from_iterator(n, (0..n).map(|i| qt[i] / (2.0 * (omega - lam[i]))))
    };

    let qnorm = qt.norm();
    let eps = 1e-14 * (1.0 + lam_max.abs());
    let phi_at_lo = norm_at(lam_max + eps);
    if phi_at_lo <= radius {
        // Hard case: top eigendirections carry no linear term. Fill the
        // remaining norm along one of them.
        let mut u = DVector::zeros(n);
        for i in 0..n {
            let d = lam_max - lam[i];
            u[i] = if d > eps { qt[i] / (2.0 * (lam_max - lam[i])) } else { 0.0 };
        }
        let fill = (radius * radius - u.norm_squared()).max(0.0).sqrt();
        let top = (0..n)
            .max_by(|&a, &b| lam[a].partial_cmp(&lam[b]).unwrap())
            .unwrap();
        u[top] += fill;
        let val = eval(&u);
        consider(u, val);
    } else {
        // phi is strictly decreasing on (lam_max, inf); bisect for |u| = radius.
        let mut lo = lam_max + eps;
        let mut hi = lam_max + qnorm / (2.0 * radius) + 1.0;
        while norm_at(hi) > radius {
            hi = lam_max + (hi - lam_max) * 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if norm_at(mid) > radius {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * (1.0 + hi.abs()) {
                break;
            }
        }
        let u = u_at(hi);
        let val = eval(&u);
        consider(u, val);
    }

    best.expect("ball maximization produced no candidate")
}

/// Maximize `x^T P x + q^T x` over `{|x| <= radius, a^T x <= ub}`.
///
/// Solves the unconstrained-ball problem first; if the cap binds, reduces to
/// a ball problem on the slice `a^T x = ub`. Returns `None` when the feasible
/// set is empty.
pub fn max_quadratic_on_capped_ball(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    radius: f64,
    a: &DVector<f64>,
    ub: f64,
) -> Option<BallMax> {
    let n = p.nrows();
    let anorm = a.norm();
    if anorm == 0.0 {
        return if ub >= 0.0 { Some(max_quadratic_on_ball(p, q, radius)) } else { None };
    }
    let free = max_quadratic_on_ball(p, q, radius);
    if a.dot(&free.argmax) <= ub + 1e-12 * (1.0 + ub.abs()) {
        return Some(free);
    }
    // The cap is active: optimize on the hyperplane slice through the ball.
    let x0 = a * (ub / (anorm * anorm));
    let slice_sq = radius * radius - x0.norm_squared();
    if slice_sq < 0.0 {
        return if ub >= 0.0 {
            // Plane misses the ball but the origin is feasible; cannot happen
            // when the free argmax violated the cap. Guard anyway.
            Some(free)
        } else {
            None
        };
    }
    // Householder basis of the orthogonal complement of a.
    let basis = orthonormal_complement(a);
    let pz = basis.transpose() * p * &basis;
    let qz = basis.transpose() * (p * &x0 * 2.0 + q);
    let inner = max_quadratic_on_ball(&symmetrize(&pz), &qz, slice_sq.sqrt());
    let x = &x0 + &basis * inner.argmax;
    let value = x.dot(&(p * &x)) + q.dot(&x);
    Some(BallMax { argmax: x, value })
}

/// Columns form an orthonormal basis of the complement of `a` (n x (n-1)).
pub fn orthonormal_complement(a: &DVector<f64>) -> DMatrix<f64> {
    let n = a.len();
    let mut v = a / a.norm();
    // Householder vector mapping v to +-e1.
    let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
    v[0] += sign;
    let vnorm2 = v.norm_squared();
    let mut h = DMatrix::identity(n, n);
    if vnorm2 > 0.0 {
        h -= (&v * v.transpose()) * (2.0 / vnorm2);
    }
    // H maps e1 to -sign*a/|a|; the remaining columns span the complement.
    h.columns(1, n - 1).into_owned()
}
