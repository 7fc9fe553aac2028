use super::{exact_q_pi, successor_pairs, ExactQ, FeatureMatrix};
use crate::envs::TabularMdp;
use crate::error::{check_dim, Error, Result};
use crate::numerics::{project_onto_columns, solve_linear, svd_rank, Matrix, RANK_TOL_EXACT};

/// Slack in the `lhs ≤ rhs` comparison.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct ProjBellmanSolution {
    pub theta: Vec<f64>,
    pub q_hat: Vec<f64>,
    /// `‖q_hat − q_π‖∞`.
    pub bound_lhs: f64,
    /// `‖Π q_π − q_π‖∞ / (1 − γ)`.
    pub bound_rhs: f64,
    pub holds: bool,
    pub rank_h: usize,
    pub features: FeatureMatrix,
    pub exact: ExactQ,
    /// Diagonal state-action weights of the projection; uniform when `None`.
    pub weights: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditRecord {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub m: usize,
    pub rank_h: usize,
    /// Largest disagreement between these norms and the solver's own.
    pub solver_gap: f64,
}

fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn check_weights(weights: Option<&[f64]>, n: usize) -> Result<()> {
    if let Some(w) = weights {
        check_dim("projection weights", n, w.len())?;
        if w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Argument("projection weights must be positive and finite".into()));
        }
    }
    Ok(())
}

/// `D^{1/2} · rows`, or the rows unchanged without weights.
fn scale_rows(m: &Matrix, weights: Option<&[f64]>) -> Matrix {
    let mut out = m.clone();
    if let Some(w) = weights {
        for (r, &wr) in w.iter().enumerate() {
            let s = wr.sqrt();
            out.row_mut(r).iter_mut().for_each(|v| *v *= s);
        }
    }
    out
}

fn weighted_projection(
    h: &Matrix,
    v: &[f64],
    weights: Option<&[f64]>,
    project: impl Fn(&Matrix, &[f64]) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    let Some(w) = weights else {
        return project(h, v);
    };
    let hs = scale_rows(h, Some(w));
    let vs: Vec<f64> = v.iter().zip(w).map(|(x, wi)| x * wi.sqrt()).collect();
    Ok(project(&hs, &vs)?.iter().zip(w).map(|(x, wi)| x / wi.sqrt()).collect())
}

/// Solve `Hᵀ D (H − γ P^π H) θ = Hᵀ D R` and audit the bound against the exact
/// `Q^π`. `D` is the identity unless `weights` are given.
pub fn solve_projected_bellman(
    h: &FeatureMatrix,
    mdp: &TabularMdp,
    policy: &[usize],
    weights: Option<&[f64]>,
) -> Result<ProjBellmanSolution> {
    let n = mdp.n_pairs();
    check_dim("feature rows", n, h.h.rows())?;
    check_weights(weights, n)?;
    let exact = exact_q_pi(mdp, policy)?;
    let m = h.h.cols();
    let next = successor_pairs(mdp, policy);
    let mut diff = h.h.clone();
    for (i, &j) in next.iter().enumerate() {
        for c in 0..m {
            let v = diff.get(i, c) - mdp.gamma * h.h.get(j, c);
            diff.set(i, c, v);
        }
    }
    let hd = scale_rows(&h.h, weights);
    let a = hd.t_matmul(&scale_rows(&diff, weights))?;
    let r = mdp.reward_vector();
    let rd: Vec<f64> = match weights {
        Some(w) => r.iter().zip(w).map(|(x, wi)| x * wi.sqrt()).collect(),
        None => r.clone(),
    };
    let b = hd.t_matmul(&Matrix::column_vector(&rd))?.into_vec();
    let rank_h = svd_rank(&h.h, RANK_TOL_EXACT)?;
    let theta = match solve_linear(&a, &b) {
        Ok(t) => t,
        Err(Error::Singular { .. }) => return Err(Error::RankDeficient { rank: rank_h }),
        Err(e) => return Err(e),
    };
    let q_hat = h.h.matvec(&theta)?;
    let proj = weighted_projection(&h.h, &exact.q, weights, |m, v| project_onto_columns(m, v, RANK_TOL_EXACT))?;
    let bound_lhs = inf_dist(&q_hat, &exact.q);
    let bound_rhs = inf_dist(&proj, &exact.q) / (1.0 - mdp.gamma);
    Ok(ProjBellmanSolution {
        theta,
        q_hat,
        bound_lhs,
        bound_rhs,
        holds: bound_lhs <= bound_rhs + BOUND_SLACK,
        rank_h,
        features: h.clone(),
        exact,
        weights: weights.map(<[f64]>::to_vec),
    })
}

/// Orthogonal projection onto `C(h)` by modified Gram-Schmidt with one
/// reorthogonalization pass; columns whose residual falls below
/// `rel_tol · max column norm` are dropped.
pub fn gram_schmidt_projection(h: &Matrix, v: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
    check_dim("gram_schmidt_projection", h.rows(), v.len())?;
    let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let cols: Vec<Vec<f64>> = (0..h.cols()).map(|c| h.column(c)).collect();
    let scale = cols.iter().map(|c| norm(c)).fold(0.0, f64::max);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for mut c in cols {
        for _ in 0..2 {
            for q in &basis {
                let k = dot(&c, q);
                c.iter_mut().zip(q).for_each(|(x, y)| *x -= k * y);
            }
        }
        let nc = norm(&c);
        if scale > 0.0 && nc > rel_tol * scale {
            c.iter_mut().for_each(|x| *x /= nc);
            basis.push(c);
        }
    }
    let mut out = vec![0.0; v.len()];
    for q in &basis {
        let k = dot(v, q);
        out.iter_mut().zip(q).for_each(|(o, y)| *o += k * y);
    }
    Ok(out)
}

/// Recompute both sides of the bound independently of the solver: `q_hat`
/// from `H θ`, and the projection by Gram-Schmidt instead of SVD.
pub fn check_error_bound(sol: &ProjBellmanSolution) -> AuditRecord {
    let h = &sol.features.h;
    let q = &sol.exact.q;
    let weights = sol.weights.as_deref();
    let q_hat = h.matvec(&sol.theta).unwrap_or_else(|_| vec![f64::NAN; q.len()]);
    let lhs = inf_dist(&q_hat, q);
    let rhs = weighted_projection(h, q, weights, |m, v| gram_schmidt_projection(m, v, 1e-10))
        .map(|p| inf_dist(&p, q) / (1.0 - sol.exact.gamma))
        .unwrap_or(f64::NAN);
    AuditRecord {
        lhs,
        rhs,
        holds: lhs <= rhs + BOUND_SLACK,
        m: h.cols(),
        rank_h: sol.rank_h,
        solver_gap: (lhs - sol.bound_lhs).abs().max((rhs - sol.bound_rhs).abs()),
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::swap_chain;
    use super::super::{build_feature_matrix, random_mdp, random_policy, FeatureSource};
    use super::*;
    use crate::numerics::Rng;

    fn custom(h: Matrix) -> FeatureMatrix {
        FeatureMatrix { h, source: "custom".into() }
    }

    fn random_matrix(r: usize, c: usize, rng: &mut Rng) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn onehot_recovers_exact_q() {
        let mut rng = Rng::new(1);
        for _ in 0..10 {
            let mdp = random_mdp(5, 3, 0.9, &mut rng).unwrap();
            let pi = random_policy(&mdp, &mut rng);
            let h = build_feature_matrix(FeatureSource::OneHot, &mdp).unwrap();
            let sol = solve_projected_bellman(&h, &mdp, &pi, None).unwrap();
            assert!(inf_dist(&sol.q_hat, &sol.exact.q) < 1e-8);
            assert!(sol.bound_lhs < 1e-8 && sol.holds);
            let audit = check_error_bound(&sol);
            assert!(audit.holds && audit.rhs >= audit.lhs - 1e-12 && audit.lhs < 1e-8);
        }
    }

    #[test]
    fn one_dimensional_feature_on_chain() {
        // θ = HᵀR / (HᵀH − γ HᵀPH) = 1 / (2 − 0.5·2) = 1
        let mdp = swap_chain(0.5);
        let h = custom(Matrix::column_vector(&[1.0, 1.0]));
        let sol = solve_projected_bellman(&h, &mdp, &[0, 0], None).unwrap();
        assert!((sol.theta[0] - 1.0).abs() < 1e-14);
        assert!(inf_dist(&sol.q_hat, &[1.0, 1.0]) < 1e-14);
        // projected equation residual: Hᵀ(H − γPH)θ − HᵀR
        let resid = (2.0 - 0.5 * 2.0) * sol.theta[0] - 1.0;
        assert!(resid.abs() < 1e-10);
    }

    #[test]
    fn full_rank_features_recover_exact_q() {
        let mut rng = Rng::new(2);
        for _ in 0..10 {
            let mdp = random_mdp(4, 3, 0.85, &mut rng).unwrap();
            let pi = random_policy(&mdp, &mut rng);
            let h = custom(random_matrix(12, 12, &mut rng));
            let sol = solve_projected_bellman(&h, &mdp, &pi, None).unwrap();
            assert!(inf_dist(&sol.q_hat, &sol.exact.q) < 1e-8);
        }
    }

    #[test]
    fn projected_fixed_point_residual() {
        let mut rng = Rng::new(3);
        for _ in 0..20 {
            let mdp = random_mdp(6, 2, 0.9, &mut rng).unwrap();
            let pi = random_policy(&mdp, &mut rng);
            let h = custom(random_matrix(12, 4, &mut rng));
            let Ok(sol) = solve_projected_bellman(&h, &mdp, &pi, None) else { continue };
            let next = successor_pairs(&mdp, &pi);
            let r = mdp.reward_vector();
            let backup: Vec<f64> = (0..12).map(|i| r[i] + 0.9 * sol.q_hat[next[i]]).collect();
            let proj = gram_schmidt_projection(&h.h, &backup, 1e-12).unwrap();
            assert!(inf_dist(&proj, &sol.q_hat) < 1e-8);
        }
    }

    #[test]
    fn gamma_zero_is_plain_projection() {
        let mut rng = Rng::new(4);
        let mdp = random_mdp(5, 2, 0.0, &mut rng).unwrap();
        let pi = random_policy(&mdp, &mut rng);
        let h = custom(random_matrix(10, 3, &mut rng));
        let sol = solve_projected_bellman(&h, &mdp, &pi, None).unwrap();
        assert!((sol.bound_lhs - sol.bound_rhs).abs() < 1e-10);
        let audit = check_error_bound(&sol);
        assert!((audit.lhs - audit.rhs).abs() < 1e-10);
        assert!(audit.holds);
    }

    #[test]
    fn weighted_variant_reduces_to_uniform_with_unit_weights() {
        let mut rng = Rng::new(5);
        let mdp = random_mdp(5, 2, 0.7, &mut rng).unwrap();
        let pi = random_policy(&mdp, &mut rng);
        let h = custom(random_matrix(10, 4, &mut rng));
        let a = solve_projected_bellman(&h, &mdp, &pi, None).unwrap();
        let b = solve_projected_bellman(&h, &mdp, &pi, Some(&[1.0; 10])).unwrap();
        assert!(inf_dist(&a.theta, &b.theta) < 1e-10);
        let w: Vec<f64> = (0..10).map(|_| rng.uniform_range(0.1, 2.0)).collect();
        let c = solve_projected_bellman(&h, &mdp, &pi, Some(&w)).unwrap();
        assert!(check_error_bound(&c).solver_gap < 1e-8);
        assert!(solve_projected_bellman(&h, &mdp, &pi, Some(&[0.0; 10])).is_err());
    }

    #[test]
    fn rank_deficient_features_report_rank() {
        let mut rng = Rng::new(6);
        let mdp = random_mdp(4, 2, 0.9, &mut rng).unwrap();
        let pi = random_policy(&mdp, &mut rng);
        let col = random_matrix(8, 1, &mut rng);
        let h = custom(col.hstack(&col).unwrap().hstack(&random_matrix(8, 1, &mut rng)).unwrap());
        match solve_projected_bellman(&h, &mdp, &pi, None) {
            Err(Error::RankDeficient { rank }) => assert_eq!(rank, 2),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn audit_agrees_with_solver() {
        let mut rng = Rng::new(7);
        for _ in 0..20 {
            let mdp = random_mdp(6, 3, 0.9, &mut rng).unwrap();
            let pi = random_policy(&mdp, &mut rng);
            let h = custom(random_matrix(18, 5, &mut rng));
            let sol = solve_projected_bellman(&h, &mdp, &pi, None).unwrap();
            let audit = check_error_bound(&sol);
            assert!(audit.solver_gap < 1e-8);
            assert_eq!(audit.holds, sol.holds);
        }
    }

    #[test]
    fn projection_residual_shrinks_with_column_space() {
        let mut rng = Rng::new(8);
        for _ in 0..30 {
            let mdp = random_mdp(5, 3, 0.9, &mut rng).unwrap();
            let pi = random_policy(&mdp, &mut rng);
            let q = exact_q_pi(&mdp, &pi).unwrap().q;
            let h1 = random_matrix(15, 3, &mut rng);
            let h2 = h1.hstack(&random_matrix(15, 4, &mut rng)).unwrap();
            let l2 = |p: Vec<f64>| p.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let r1 = l2(project_onto_columns(&h1, &q, 1e-12).unwrap());
            let r2 = l2(project_onto_columns(&h2, &q, 1e-12).unwrap());
            assert!(r2 <= r1 + 1e-12);
        }
    }
}
