//! Ridge by eigendecomposition and lasso by coordinate descent.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{check_inputs, FittedModel, ModelBody, ModelError, ModelKind, ModelSpec, Result, Standardizer};

const LASSO_TOL: f64 = 1e-7;
const LASSO_MAX_SWEEPS: usize = 10_000;

fn check_penalty(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(ModelError::InvalidHyperparameter(format!(
            "penalty must be finite and >= 0, got {lambda}"
        )));
    }
    Ok(())
}

fn prepare(x: &DMatrix<f64>, y: &[f64]) -> Result<(Standardizer, DMatrix<f64>, f64, DVector<f64>)> {
    check_inputs(x, y.len(), 1)?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite);
    }
    let st = Standardizer::fit(x);
    let z = st.apply(x);
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - ybar));
    Ok((st, z, ybar, yc))
}

fn linear_model(kind: ModelKind, param: f64, st: &Standardizer, beta: Vec<f64>, b: f64) -> FittedModel {
    FittedModel {
        spec: ModelSpec::new(kind, param),
        standardizer: st.clone(),
        columns: None,
        body: ModelBody::Linear {
            coefficients: beta,
            intercept: b,
        },
    }
}

/// Multiply by (M + λI)⁻¹ given M = V diag(evals) Vᵀ; directions in the
/// numerical null space of M are dropped.
fn spectral_solve(eig: &SymmetricEigen<f64, nalgebra::Dyn>, rhs: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let tol = 1e-12 * max.max(1.0) * eig.eigenvalues.len() as f64;
    let mut rot = eig.eigenvectors.tr_mul(rhs);
    for (r, &ev) in rot.iter_mut().zip(eig.eigenvalues.iter()) {
        *r = if ev > tol { *r / (ev + lambda) } else { 0.0 };
    }
    &eig.eigenvectors * rot
}

/// Ridge fits for several penalties from a single decomposition. Minimizes
/// ‖y − b − Zβ‖² + λ‖β‖² over standardized Z, intercept unpenalized.
pub fn ridge_path(x: &DMatrix<f64>, y: &[f64], lambdas: &[f64]) -> Result<Vec<FittedModel>> {
    for &l in lambdas {
        check_penalty(l)?;
    }
    let (st, z, ybar, yc) = prepare(x, y)?;
    let (n, p) = z.shape();
    if p == 0 {
        return Ok(lambdas
            .iter()
            .map(|&l| linear_model(ModelKind::Ridge, l, &st, Vec::new(), ybar))
            .collect());
    }
    let mut out = Vec::with_capacity(lambdas.len());
    if p <= n {
        let gram = z.tr_mul(&z);
        let eig = SymmetricEigen::new(gram.clone());
        let zty = z.tr_mul(&yc);
        for &l in lambdas {
            let mut beta = spectral_solve(&eig, &zty, l);
            // one refinement step on the normal equations
            let resid = &zty - (&gram * &beta + &beta * l);
            beta += spectral_solve(&eig, &resid, l);
            out.push(linear_model(ModelKind::Ridge, l, &st, beta.as_slice().to_vec(), ybar));
        }
    } else {
        // dual form: β = Zᵀ (ZZᵀ + λI)⁻¹ y
        let kernel = &z * z.transpose();
        let eig = SymmetricEigen::new(kernel.clone());
        for &l in lambdas {
            let mut a = spectral_solve(&eig, &yc, l);
            let resid = &yc - (&kernel * &a + &a * l);
            a += spectral_solve(&eig, &resid, l);
            let beta = z.tr_mul(&a);
            out.push(linear_model(ModelKind::Ridge, l, &st, beta.as_slice().to_vec(), ybar));
        }
    }
    Ok(out)
}

pub fn ridge_fit(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<FittedModel> {
    Ok(ridge_path(x, y, &[lambda])?.pop().expect("one model"))
}

/// (1/2n)‖y − b − Zβ‖² + λ‖β‖₁ on already standardized `z`.
pub fn lasso_objective(z: &DMatrix<f64>, y: &[f64], beta: &[f64], intercept: f64, lambda: f64) -> f64 {
    let n = z.nrows() as f64;
    let fit = z * DVector::from_column_slice(beta);
    let rss: f64 = y
        .iter()
        .zip(fit.iter())
        .map(|(yi, fi)| (yi - intercept - fi).powi(2))
        .sum();
    rss / (2.0 * n) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

struct Cd<'a> {
    z: &'a [f64],
    y: &'a [f64],
    n: usize,
    col_sq: Vec<f64>,
    lambda: f64,
}

impl Cd<'_> {
    fn col(&self, j: usize) -> &[f64] {
        &self.z[j * self.n..(j + 1) * self.n]
    }

    fn sweep(&self, beta: &mut [f64], resid: &mut [f64], coords: impl Iterator<Item = usize>) -> f64 {
        let nf = self.n as f64;
        let mut max_change = 0.0f64;
        for j in coords {
            let c = self.col_sq[j];
            if c <= 0.0 {
                continue;
            }
            let col = self.col(j);
            let old = beta[j];
            let dot: f64 = col.iter().zip(resid.iter()).map(|(a, b)| a * b).sum();
            let new = soft_threshold(dot / nf + c * old, self.lambda) / c;
            if new != old {
                let delta = new - old;
                for (r, a) in resid.iter_mut().zip(col) {
                    *r -= a * delta;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        max_change
    }

    /// Exact solve on the active set with the current signs. Null directions
    /// of the active Gram matrix that lower the L1 term are followed until a
    /// coefficient reaches zero. Every move is kept only if the objective
    /// does not rise and the signs survive.
    fn polish(&self, beta: &mut [f64], resid: &mut [f64]) {
        let nf = self.n as f64;
        let yv = DVector::from_column_slice(self.y);
        for _ in 0..beta.len() {
            let active: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
            let k = active.len();
            if k == 0 {
                return;
            }
            let za = DMatrix::from_fn(self.n, k, |i, a| self.col(active[a])[i]);
            let eig = SymmetricEigen::new(za.tr_mul(&za) / nf);
            let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
            let tol = 1e-10 * max.max(f64::MIN_POSITIVE);
            let null: Vec<usize> = (0..k).filter(|&i| eig.eigenvalues[i] <= tol).collect();
            let signs = DVector::from_iterator(k, active.iter().map(|&j| beta[j].signum()));
            let ba = DVector::from_iterator(k, active.iter().map(|&j| beta[j]));
            let current = self.objective(beta, resid);

            let mut dir = DVector::zeros(k);
            for &i in &null {
                let v = eig.eigenvectors.column(i);
                dir -= v * v.dot(&signs);
            }
            if dir.norm() > 1e-9 {
                let step = (0..k)
                    .filter(|&a| ba[a] * dir[a] < 0.0)
                    .map(|a| (-ba[a] / dir[a], a))
                    .min_by(|x, y| x.0.total_cmp(&y.0));
                let Some((t, hit)) = step else { return };
                let mut cand = &ba + dir * t;
                cand[hit] = 0.0;
                if !self.try_accept(beta, resid, &active, &za, &yv, &cand, &signs, current) {
                    return;
                }
                continue;
            }

            let rhs = za.tr_mul(&yv) / nf - &signs * self.lambda;
            let mut rot = eig.eigenvectors.tr_mul(&rhs);
            let keep = eig.eigenvectors.tr_mul(&ba);
            for i in 0..k {
                rot[i] = if eig.eigenvalues[i] > tol {
                    rot[i] / eig.eigenvalues[i]
                } else {
                    keep[i]
                };
            }
            let cand = &eig.eigenvectors * rot;
            if cand.iter().zip(signs.iter()).any(|(&c, &s)| c == 0.0 || c.signum() != s) {
                return;
            }
            self.try_accept(beta, resid, &active, &za, &yv, &cand, &signs, current);
            return;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn try_accept(
        &self,
        beta: &mut [f64],
        resid: &mut [f64],
        active: &[usize],
        za: &DMatrix<f64>,
        yv: &DVector<f64>,
        cand: &DVector<f64>,
        signs: &DVector<f64>,
        current: f64,
    ) -> bool {
        // entries may only shrink to zero, never flip
        if cand.iter().zip(signs.iter()).any(|(&c, &s)| c != 0.0 && c.signum() != s) {
            return false;
        }
        let new_resid = yv - za * cand;
        let mut new_beta = beta.to_vec();
        for (&j, &c) in active.iter().zip(cand.iter()) {
            new_beta[j] = c;
        }
        if self.objective(&new_beta, new_resid.as_slice()) <= current {
            beta.copy_from_slice(&new_beta);
            resid.copy_from_slice(new_resid.as_slice());
            true
        } else {
            false
        }
    }

    fn objective(&self, beta: &[f64], resid: &[f64]) -> f64 {
        let rss: f64 = resid.iter().map(|r| r * r).sum();
        rss / (2.0 * self.n as f64) + self.lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// Full sweeps alternating with active-set passes. Ok(sweeps) once a full
    /// sweep moves no coefficient by more than the tolerance.
    fn run(&self, beta: &mut [f64], resid: &mut [f64], mut trace: Option<&mut Vec<f64>>) -> std::result::Result<usize, usize> {
        let p = beta.len();
        let mut sweeps = 0;
        let record = |beta: &[f64], resid: &[f64], trace: &mut Option<&mut Vec<f64>>| {
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.objective(beta, resid));
            }
        };
        record(beta, resid, &mut trace);
        loop {
            let change = self.sweep(beta, resid, 0..p);
            sweeps += 1;
            record(beta, resid, &mut trace);
            if change < LASSO_TOL {
                return Ok(sweeps);
            }
            loop {
                if sweeps >= LASSO_MAX_SWEEPS {
                    return Err(sweeps);
                }
                let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
                let change = self.sweep(beta, resid, active.into_iter());
                sweeps += 1;
                if sweeps % 25 == 0 {
                    self.polish(beta, resid);
                }
                record(beta, resid, &mut trace);
                if change < LASSO_TOL {
                    break;
                }
            }
        }
    }
}

fn lasso_inner(
    x: &DMatrix<f64>,
    y: &[f64],
    lambdas: &[f64],
    mut trace: Option<&mut Vec<f64>>,
) -> Result<Vec<Result<FittedModel>>> {
    for &l in lambdas {
        check_penalty(l)?;
    }
    let (st, z, ybar, yc) = prepare(x, y)?;
    let (n, p) = z.shape();
    let col_sq: Vec<f64> = (0..p)
        .map(|j| z.column(j).norm_squared() / n as f64)
        .map(|c| if c < 1e-12 { 0.0 } else { c })
        .collect();
    // warm starts along decreasing penalties
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
    let mut beta = vec![0.0; p];
    let mut resid: Vec<f64> = yc.iter().copied().collect();
    let mut results: Vec<Option<Result<FittedModel>>> = (0..lambdas.len()).map(|_| None).collect();
    for i in order {
        let l = lambdas[i];
        let cd = Cd {
            z: z.as_slice(),
            y: yc.as_slice(),
            n,
            col_sq: col_sq.clone(),
            lambda: l,
        };
        let outcome = cd.run(&mut beta, &mut resid, trace.as_deref_mut());
        let model = linear_model(ModelKind::Lasso, l, &st, beta.clone(), ybar);
        results[i] = Some(match outcome {
            Ok(_) => Ok(model),
            Err(sweeps) => Err(ModelError::NotConverged {
                sweeps,
                last: Box::new(model),
            }),
        });
    }
    Ok(results.into_iter().map(|r| r.expect("filled")).collect())
}

/// Lasso fits for several penalties with warm starts. Each entry is that
/// penalty's model or a convergence error carrying its last iterate.
pub fn lasso_path(x: &DMatrix<f64>, y: &[f64], lambdas: &[f64]) -> Result<Vec<Result<FittedModel>>> {
    lasso_inner(x, y, lambdas, None)
}

pub fn lasso_fit(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<FittedModel> {
    lasso_inner(x, y, &[lambda], None)?.pop().expect("one model")
}

/// As [`lasso_fit`], also returning the objective after every sweep.
pub fn lasso_fit_traced(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<(FittedModel, Vec<f64>)> {
    let mut trace = Vec::new();
    let model = lasso_inner(x, y, &[lambda], Some(&mut trace))?
        .pop()
        .expect("one model")?;
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(rng: &mut ChaCha8Rng, n: usize, p: usize) -> (DMatrix<f64>, Vec<f64>) {
        let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-3.0..3.0));
        let y = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        (x, y)
    }

    /// Gaussian elimination with partial pivoting on (ZᵀZ + λI)β = Zᵀy.
    fn normal_equation_oracle(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Vec<f64> {
        let (n, p) = x.shape();
        let mut z = vec![vec![0.0; p]; n];
        for j in 0..p {
            let mean = (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64;
            let sd = ((0..n).map(|i| (x[(i, j)] - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            for i in 0..n {
                z[i][j] = (x[(i, j)] - mean) / sd;
            }
        }
        let ybar = y.iter().sum::<f64>() / n as f64;
        let mut a = vec![vec![0.0; p + 1]; p];
        for r in 0..p {
            for c in 0..p {
                a[r][c] = (0..n).map(|i| z[i][r] * z[i][c]).sum::<f64>() + if r == c { lambda } else { 0.0 };
            }
            a[r][p] = (0..n).map(|i| z[i][r] * (y[i] - ybar)).sum();
        }
        for k in 0..p {
            let piv = (k..p).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
            a.swap(k, piv);
            for i in k + 1..p {
                let f = a[i][k] / a[k][k];
                for c in k..=p {
                    a[i][c] -= f * a[k][c];
                }
            }
        }
        let mut beta = vec![0.0; p];
        for k in (0..p).rev() {
            let s: f64 = (k + 1..p).map(|c| a[k][c] * beta[c]).sum();
            beta[k] = (a[k][p] - s) / a[k][k];
        }
        beta
    }

    #[test]
    fn ridge_exact_ols() {
        let x = DMatrix::from_row_slice(3, 1, &[-1.0, 0.0, 1.0]);
        let y = [-2.0, 0.0, 2.0];
        let m = ridge_fit(&x, &y, 0.0).unwrap();
        // standardized slope times the population sd of x
        let sd = (2.0f64 / 3.0).sqrt();
        assert!((m.coefficients().unwrap()[0] / sd - 2.0).abs() < 1e-12);
        let pred = m.score(&x).unwrap();
        assert!(pred.iter().zip(y).all(|(p, t)| (p - t).abs() < 1e-8));
    }

    #[test]
    fn ridge_penalty_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (x, y) = random_problem(&mut rng, 12, 4);
        let m = ridge_fit(&x, &y, 1e6).unwrap();
        let norm: f64 = m.coefficients().unwrap().iter().map(|b| b * b).sum::<f64>().sqrt();
        assert!(norm < 1e-3);
        let ybar = y.iter().sum::<f64>() / 12.0;
        assert!((m.intercept().unwrap() - ybar).abs() < 1e-12);
    }

    #[test]
    fn ridge_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let n = rng.random_range(3..=30);
            let p = rng.random_range(1..=12);
            let (x, y) = random_problem(&mut rng, n, p);
            for &l in &super::super::REGULARIZATION_GRID {
                let m = ridge_fit(&x, &y, l).unwrap();
                let oracle = normal_equation_oracle(&x, &y, l);
                for (a, b) in m.coefficients().unwrap().iter().zip(&oracle) {
                    assert!((a - b).abs() < 1e-6, "n={n} p={p} λ={l}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn ridge_dual_branch_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (x, y) = random_problem(&mut rng, 6, 15);
        for &l in &[0.1, 1.0, 10.0] {
            let m = ridge_fit(&x, &y, l).unwrap();
            let oracle = normal_equation_oracle(&x, &y, l);
            for (a, b) in m.coefficients().unwrap().iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn ridge_rejects_non_finite() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, f64::NAN]);
        assert!(matches!(ridge_fit(&x, &[1.0, 2.0], 1.0), Err(ModelError::NonFinite)));
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(matches!(ridge_fit(&x, &[1.0, f64::INFINITY], 1.0), Err(ModelError::NonFinite)));
    }

    fn lasso_gradient(m: &FittedModel, x: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
        let z = m.standardizer.apply(x);
        let beta = DVector::from_column_slice(m.coefficients().unwrap());
        let b = m.intercept().unwrap();
        let resid = DVector::from_iterator(y.len(), y.iter().map(|v| v - b)) - &z * beta;
        (z.tr_mul(&resid) / -(y.len() as f64)).as_slice().to_vec()
    }

    #[test]
    fn lasso_kkt_and_zero_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let n = rng.random_range(5..30);
            let p = rng.random_range(1..10);
            let (x, y) = random_problem(&mut rng, n, p);
            for &l in &super::super::REGULARIZATION_GRID {
                let m = lasso_fit(&x, &y, l).unwrap();
                let g = lasso_gradient(&m, &x, &y);
                for (gj, bj) in g.iter().zip(m.coefficients().unwrap()) {
                    if *bj == 0.0 {
                        assert!(gj.abs() <= l + 1e-5);
                    } else {
                        assert!((gj + l * bj.signum()).abs() <= 1e-5);
                    }
                }
            }
            let z = Standardizer::fit(&x).apply(&x);
            let ybar = y.iter().sum::<f64>() / n as f64;
            let lmax = (0..p)
                .map(|j| z.column(j).iter().zip(&y).map(|(a, b)| a * (b - ybar)).sum::<f64>().abs() / n as f64)
                .fold(0.0, f64::max);
            let m = lasso_fit(&x, &y, lmax * (1.0 + 1e-12)).unwrap();
            assert!(m.coefficients().unwrap().iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn lasso_without_penalty_is_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (x, y) = random_problem(&mut rng, 40, 3);
        let lasso = lasso_fit(&x, &y, 0.0).unwrap();
        let ols = ridge_fit(&x, &y, 0.0).unwrap();
        for (a, b) in lasso.coefficients().unwrap().iter().zip(ols.coefficients().unwrap()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn lasso_beats_random_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (x, y) = random_problem(&mut rng, 10, 4);
        let l = 0.1;
        let m = lasso_fit(&x, &y, l).unwrap();
        let z = m.standardizer.apply(&x);
        let beta = m.coefficients().unwrap().to_vec();
        let b = m.intercept().unwrap();
        let best = lasso_objective(&z, &y, &beta, b, l);
        for k in 0..100_000 {
            let scale = 10f64.powi(-(k % 6) as i32);
            let pert: Vec<f64> = beta.iter().map(|v| v + scale * rng.random_range(-1.0..1.0)).collect();
            let pb = b + scale * rng.random_range(-1.0..1.0);
            assert!(lasso_objective(&z, &y, &pert, pb, l) >= best - 1e-12);
        }
    }

    #[test]
    fn lasso_trace_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (x, y) = random_problem(&mut rng, 20, 30);
        let (_, trace) = lasso_fit_traced(&x, &y, 0.05).unwrap();
        assert!(trace.len() > 2);
        assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn lasso_path_matches_single_fits() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (x, y) = random_problem(&mut rng, 15, 6);
        let path = lasso_path(&x, &y, &super::super::REGULARIZATION_GRID).unwrap();
        for (m, &l) in path.iter().zip(&super::super::REGULARIZATION_GRID) {
            let single = lasso_fit(&x, &y, l).unwrap();
            let m = m.as_ref().unwrap();
            assert_eq!(m.spec.param, l);
            for (a, b) in m.coefficients().unwrap().iter().zip(single.coefficients().unwrap()) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn lasso_zero_set_grows_on_orthonormal_design() {
        // orthogonal ±1 columns have unit population variance after centering
        let x = DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, 1.0, -1.0, -1.0, -1.0, 1.0],
        );
        let y = [3.0, 0.5, -1.0, -2.5];
        let mut prev_zero: Vec<bool> = vec![false; 3];
        for l in [0.0, 0.1, 0.4, 0.8, 1.2, 2.0] {
            let m = lasso_fit(&x, &y, l).unwrap();
            let zero: Vec<bool> = m.coefficients().unwrap().iter().map(|&b| b == 0.0).collect();
            assert!(prev_zero.iter().zip(&zero).all(|(a, b)| !a || *b));
            prev_zero = zero;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn ridge_norm_shrinks_with_penalty(seed in any::<u64>(), n in 3usize..25, p in 1usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (x, y) = random_problem(&mut rng, n, p);
            let path = ridge_path(&x, &y, &super::super::REGULARIZATION_GRID).unwrap();
            let norms: Vec<f64> = path.iter().map(|m| m.coefficients().unwrap().iter().map(|b| b * b).sum::<f64>().sqrt()).collect();
            prop_assert!(norms.windows(2).all(|w| w[0] >= w[1] - 1e-9 * (1.0 + w[0])));
        }

        #[test]
        fn linear_predictions_ignore_affine_rescaling(seed in any::<u64>(), a in 0.1f64..20.0, b in -50.0f64..50.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (x, y) = random_problem(&mut rng, 15, 4);
            let mut x2 = x.clone();
            x2.column_mut(2).apply(|v| *v = a * *v + b);
            for fit in [ridge_fit as fn(&DMatrix<f64>, &[f64], f64) -> Result<FittedModel>, lasso_fit] {
                let p1 = fit(&x, &y, 0.1).unwrap().score(&x).unwrap();
                let p2 = fit(&x2, &y, 0.1).unwrap().score(&x2).unwrap();
                for (u, v) in p1.iter().zip(&p2) {
                    prop_assert!((u - v).abs() < 1e-6);
                }
            }
        }
    }
}
