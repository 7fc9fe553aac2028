use nalgebra::DMatrix;

use super::matrix::Matrix;
use crate::error::{check_dim, Error, Result};

/// Relative pivot tolerance for [`solve_linear`]: a pivot is rejected when
/// `|pivot| < PIVOT_TOL · max|A_ij|`.
pub const PIVOT_TOL: f64 = 1e-12;

/// Solve `A x = b` by LU factorization with partial pivoting.
pub fn solve_linear(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    check_dim("solve_linear square", n, a.cols())?;
    check_dim("solve_linear rhs", n, b.len())?;
    a.ensure_finite("solve_linear matrix")?;
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("solve_linear rhs contains non-finite entries".into()));
    }
    let scale = a.max_abs();
    if n > 0 && scale == 0.0 {
        return Err(Error::Singular { pivot: 0.0 });
    }
    let tol = PIVOT_TOL * scale;
    let mut lu = a.data().to_vec();
    let mut x = b.to_vec();
    for k in 0..n {
        let (p, pivot) = (k..n)
            .map(|r| (r, lu[r * n + k].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot < tol {
            return Err(Error::Singular { pivot });
        }
        if p != k {
            for c in 0..n {
                lu.swap(k * n + c, p * n + c);
            }
            x.swap(k, p);
        }
        let d = lu[k * n + k];
        for r in k + 1..n {
            let f = lu[r * n + k] / d;
            if f == 0.0 {
                continue;
            }
            lu[r * n + k] = 0.0;
            for c in k + 1..n {
                lu[r * n + c] -= f * lu[k * n + c];
            }
            x[r] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k];
        for c in k + 1..n {
            s -= lu[k * n + c] * x[c];
        }
        x[k] = s / lu[k * n + k];
    }
    Ok(x)
}

fn to_nalgebra(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

const SVD_MAX_ITER: usize = 10_000;

/// Singular values in descending order.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    m.ensure_finite("singular_values input")?;
    if m.rows() == 0 || m.cols() == 0 {
        return Ok(Vec::new());
    }
    let svd = to_nalgebra(m)
        .try_svd(false, false, f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Number of singular values `σ_i ≥ rel_tol · σ_max`; zero for the zero matrix.
pub fn svd_rank(m: &Matrix, rel_tol: f64) -> Result<usize> {
    let s = singular_values(m)?;
    let max = s.first().copied().unwrap_or(0.0);
    if max == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&v| v >= rel_tol * max).count())
}

/// Orthogonal projection of `v` onto the column space of `h`, computed from
/// the left singular vectors whose singular values exceed `rel_tol · σ_max`.
pub fn project_onto_columns(h: &Matrix, v: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
    check_dim("project_onto_columns", h.rows(), v.len())?;
    h.ensure_finite("project_onto_columns basis")?;
    if h.cols() == 0 {
        return Ok(vec![0.0; v.len()]);
    }
    let svd = to_nalgebra(h)
        .try_svd(true, false, f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let u = svd.u.as_ref().expect("U requested");
    let max = svd.singular_values.iter().fold(0.0f64, |m, s| m.max(*s));
    let mut out = vec![0.0; v.len()];
    if max == 0.0 {
        return Ok(out);
    }
    for (j, &s) in svd.singular_values.iter().enumerate() {
        if s < rel_tol * max {
            continue;
        }
        let col = u.column(j);
        let coef: f64 = col.iter().zip(v).map(|(a, b)| a * b).sum();
        for (o, a) in out.iter_mut().zip(col.iter()) {
            *o += coef * a;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn gaussian(rng: &mut Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.normal()).collect()).unwrap()
    }

    fn inf_norm(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Independent rank oracle: Gaussian elimination with full pivoting.
    fn elimination_rank(m: &Matrix, tol: f64) -> usize {
        let (r, c) = m.shape();
        let mut a = m.data().to_vec();
        let mut rank = 0;
        let mut rows: Vec<usize> = (0..r).collect();
        let mut cols: Vec<usize> = (0..c).collect();
        let scale = m.max_abs();
        while rank < r.min(c) {
            let mut best = (0, 0, 0.0);
            for (ri, &row) in rows.iter().enumerate().skip(rank) {
                for (ci, &col) in cols.iter().enumerate().skip(rank) {
                    let v = a[row * c + col].abs();
                    if v > best.2 {
                        best = (ri, ci, v);
                    }
                }
            }
            if best.2 <= tol * scale {
                break;
            }
            rows.swap(rank, best.0);
            cols.swap(rank, best.1);
            let (pr, pc) = (rows[rank], cols[rank]);
            let p = a[pr * c + pc];
            for &row in &rows[rank + 1..] {
                let f = a[row * c + pc] / p;
                for &col in &cols[rank..] {
                    a[row * c + col] -= f * a[pr * c + col];
                }
            }
            rank += 1;
        }
        rank
    }

    #[test]
    fn identity_solve() {
        let b = vec![3.0, -1.0, 2.5];
        assert_eq!(solve_linear(&Matrix::identity(3), &b).unwrap(), b);
    }

    #[test]
    fn diagonal_solve() {
        let a = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap();
        assert_eq!(solve_linear(&a, &[2.0, 8.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn random_well_conditioned_residual() {
        let mut rng = Rng::new(21);
        let mut a = gaussian(&mut rng, 10, 10);
        for i in 0..10 {
            a.set(i, i, a.get(i, i) + 10.0);
        }
        let b: Vec<f64> = (0..10).map(|_| rng.normal()).collect();
        let x = solve_linear(&a, &b).unwrap();
        let ax = a.matvec(&x).unwrap();
        let resid: Vec<f64> = ax.iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(inf_norm(&resid) <= 1e-8 * (1.0 + inf_norm(&b)));
    }

    #[test]
    fn singular_system_reports_pivot() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        match solve_linear(&a, &[1.0, 1.0]) {
            Err(Error::Singular { pivot }) => assert!(pivot < 1e-11),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn rank_of_identity_and_zero() {
        assert_eq!(svd_rank(&Matrix::identity(8), 1e-6).unwrap(), 8);
        assert_eq!(svd_rank(&Matrix::zeros(512, 256), 1e-6).unwrap(), 0);
    }

    #[test]
    fn gaussian_matrix_is_full_rank() {
        let mut rng = Rng::new(99);
        let g = gaussian(&mut rng, 512, 256);
        assert_eq!(elimination_rank(&g, 1e-10), 256);
        assert_eq!(svd_rank(&g, 1e-6).unwrap(), 256);
    }

    #[test]
    fn rank_matches_elimination_on_low_rank_products() {
        let mut rng = Rng::new(5);
        for k in 1..6 {
            let p = gaussian(&mut rng, 12, k).matmul(&gaussian(&mut rng, k, 9)).unwrap();
            assert_eq!(svd_rank(&p, 1e-10).unwrap(), k);
            assert_eq!(elimination_rank(&p, 1e-10), k);
        }
    }

    #[test]
    fn projection_is_idempotent_and_orthogonal() {
        let mut rng = Rng::new(17);
        let h = gaussian(&mut rng, 10, 3);
        let v: Vec<f64> = (0..10).map(|_| rng.normal()).collect();
        let p = project_onto_columns(&h, &v, 1e-12).unwrap();
        let pp = project_onto_columns(&h, &p, 1e-12).unwrap();
        assert!(p.iter().zip(&pp).all(|(a, b)| (a - b).abs() < 1e-12));
        let r: Vec<f64> = v.iter().zip(&p).map(|(a, b)| a - b).collect();
        let ht_r = h.t_matmul(&Matrix::column_vector(&r)).unwrap();
        assert!(ht_r.max_abs() < 1e-10);
    }
}
