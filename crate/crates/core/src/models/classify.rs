//! L2 logistic regression (Newton) and linear SVM (SMO on the dual).

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{check_inputs, FittedModel, ModelBody, ModelError, ModelKind, ModelSpec, Result, Standardizer};

const LOGISTIC_GRAD_TOL: f64 = 1e-6;
const LOGISTIC_MAX_ITER: usize = 200;
const SVM_TOL: f64 = 1e-6;
const SVM_MAX_ITER: usize = 1_000_000;
const TAU: f64 = 1e-12;

/// Optimizer objective per iteration. For the SVM this is the dual objective
/// in minimization form.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassifierTrace {
    pub objective: Vec<f64>,
    pub converged: bool,
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn softplus(v: f64) -> f64 {
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}

fn check_classes(x: &DMatrix<f64>, y: &[bool], c: f64) -> Result<()> {
    check_inputs(x, y.len(), 2)?;
    if !y.iter().any(|&b| b) || y.iter().all(|&b| b) {
        return Err(ModelError::DegenerateLabels);
    }
    if !c.is_finite() || c <= 0.0 {
        return Err(ModelError::InvalidHyperparameter(format!("C must be > 0, got {c}")));
    }
    Ok(())
}

fn margins(z: &DMatrix<f64>, intercept: f64, beta: &[f64]) -> DVector<f64> {
    let eta = z * DVector::from_column_slice(beta);
    eta.add_scalar(intercept)
}

/// Mean log-loss plus (1/(2C))‖β‖² on already standardized `z`.
pub fn logistic_objective(z: &DMatrix<f64>, y: &[bool], c: f64, intercept: f64, beta: &[f64]) -> f64 {
    let eta = margins(z, intercept, beta);
    let n = y.len() as f64;
    let loss: f64 = eta
        .iter()
        .zip(y)
        .map(|(&e, &yi)| softplus(e) - if yi { e } else { 0.0 })
        .sum();
    loss / n + beta.iter().map(|b| b * b).sum::<f64>() / (2.0 * c)
}

/// Gradient of [`logistic_objective`] as (∂/∂intercept, ∂/∂β).
pub fn logistic_gradient(z: &DMatrix<f64>, y: &[bool], c: f64, intercept: f64, beta: &[f64]) -> (f64, Vec<f64>) {
    let eta = margins(z, intercept, beta);
    let n = y.len() as f64;
    let r = DVector::from_iterator(y.len(), eta.iter().zip(y).map(|(&e, &yi)| sigmoid(e) - f64::from(u8::from(yi))));
    let gb = r.sum() / n;
    let gbeta = z.tr_mul(&r) / n;
    (gb, gbeta.iter().zip(beta).map(|(g, b)| g + b / c).collect())
}

/// Orthonormal reduction of the row space: Z = W Vᵀ with Vᵀ V = I, so any
/// penalized linear fit has β = V θ and ‖β‖ = ‖θ‖.
fn row_space(z: &DMatrix<f64>) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
    let (n, p) = z.shape();
    if p <= n {
        return (z.clone(), None);
    }
    let eig = SymmetricEigen::new(z * z.transpose());
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 1e-10 * max.max(1e-300)).collect();
    let r = keep.len();
    let mut w = DMatrix::zeros(n, r);
    let mut v = DMatrix::zeros(p, r);
    for (k, &i) in keep.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        let u = eig.eigenvectors.column(i);
        w.set_column(k, &(u * s));
        v.set_column(k, &(z.tr_mul(&u) / s));
    }
    (w, Some(v))
}

fn linear_model(kind: ModelKind, c: f64, st: Standardizer, beta: Vec<f64>, b: f64) -> FittedModel {
    FittedModel {
        spec: ModelSpec::new(kind, c),
        standardizer: st,
        columns: None,
        body: ModelBody::Linear {
            coefficients: beta,
            intercept: b,
        },
    }
}

pub fn logistic_fit(x: &DMatrix<f64>, y: &[bool], c: f64) -> Result<FittedModel> {
    logistic_fit_traced(x, y, c).map(|(m, _)| m)
}

/// Damped Newton on (intercept, θ) in the reduced row-space basis.
pub fn logistic_fit_traced(x: &DMatrix<f64>, y: &[bool], c: f64) -> Result<(FittedModel, ClassifierTrace)> {
    check_classes(x, y, c)?;
    let st = Standardizer::fit(x);
    let z = st.apply(x);
    let (w, basis) = row_space(&z);
    let (n, r) = w.shape();
    let nf = n as f64;
    let yv: Vec<f64> = y.iter().map(|&b| f64::from(u8::from(b))).collect();

    let objective = |b: f64, theta: &DVector<f64>| -> f64 {
        let eta = (&w * theta).add_scalar(b);
        let loss: f64 = eta.iter().zip(&yv).map(|(&e, &yi)| softplus(e) - yi * e).sum();
        loss / nf + theta.norm_squared() / (2.0 * c)
    };

    let prior = yv.iter().sum::<f64>() / nf;
    let mut b = (prior / (1.0 - prior)).ln();
    let mut theta = DVector::zeros(r);
    let mut f = objective(b, &theta);
    let mut trace = ClassifierTrace {
        objective: vec![f],
        converged: false,
    };
    for _ in 0..LOGISTIC_MAX_ITER {
        let eta = (&w * &theta).add_scalar(b);
        let prob: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let resid = DVector::from_iterator(n, prob.iter().zip(&yv).map(|(p, yi)| p - yi));
        let mut grad = DVector::zeros(r + 1);
        grad[0] = resid.sum() / nf;
        let gt = w.tr_mul(&resid) / nf + &theta / c;
        grad.rows_mut(1, r).copy_from(&gt);
        if grad.norm() < LOGISTIC_GRAD_TOL {
            trace.converged = true;
            break;
        }
        let s: Vec<f64> = prob.iter().map(|p| p * (1.0 - p)).collect();
        let mut h = DMatrix::zeros(r + 1, r + 1);
        let mut ws = w.clone();
        for (i, &si) in s.iter().enumerate() {
            ws.row_mut(i).scale_mut(si);
        }
        h[(0, 0)] = s.iter().sum::<f64>() / nf + TAU;
        let cross = ws.row_sum() / nf;
        for k in 0..r {
            h[(0, k + 1)] = cross[k];
            h[(k + 1, 0)] = cross[k];
        }
        let inner = w.tr_mul(&ws) / nf;
        h.view_mut((1, 1), (r, r)).copy_from(&inner);
        for k in 0..r {
            h[(k + 1, k + 1)] += 1.0 / c;
        }
        let step = match h.cholesky() {
            Some(ch) => -ch.solve(&grad),
            None => -grad.clone(),
        };
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let nb = b + t * step[0];
            let nt = &theta + t * step.rows(1, r);
            let nf_val = objective(nb, &nt);
            if nf_val <= f + 1e-4 * t * slope {
                b = nb;
                theta = nt;
                f = nf_val;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        trace.objective.push(f);
        if !accepted {
            // no representable decrease left
            trace.converged = grad.norm() < 1e3 * LOGISTIC_GRAD_TOL;
            break;
        }
    }
    let beta = match basis {
        Some(v) => (v * theta).as_slice().to_vec(),
        None => theta.as_slice().to_vec(),
    };
    Ok((linear_model(ModelKind::LogisticL2, c, st, beta, b), trace))
}

fn signs(y: &[bool]) -> Vec<f64> {
    y.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect()
}

/// (1/2)‖β‖² + C Σ hinge(yᵢ(zᵢᵀβ + b)) with y mapped to ±1.
pub fn svm_objective(z: &DMatrix<f64>, y: &[bool], c: f64, intercept: f64, beta: &[f64]) -> f64 {
    let m = margins(z, intercept, beta);
    let hinge: f64 = m.iter().zip(signs(y)).map(|(&mi, yi)| (1.0 - yi * mi).max(0.0)).sum();
    0.5 * beta.iter().map(|b| b * b).sum::<f64>() + c * hinge
}

/// Subgradient of [`svm_objective`]; the gradient wherever no margin sits
/// exactly at 1.
pub fn svm_subgradient(z: &DMatrix<f64>, y: &[bool], c: f64, intercept: f64, beta: &[f64]) -> (f64, Vec<f64>) {
    let m = margins(z, intercept, beta);
    let ys = signs(y);
    let active = DVector::from_iterator(
        y.len(),
        m.iter().zip(&ys).map(|(&mi, &yi)| if 1.0 - yi * mi > 0.0 { yi } else { 0.0 }),
    );
    let gb = -c * active.sum();
    let gbeta = z.tr_mul(&active) * -c;
    (gb, gbeta.iter().zip(beta).map(|(g, b)| g + b).collect())
}

pub fn svm_fit(x: &DMatrix<f64>, y: &[bool], c: f64) -> Result<FittedModel> {
    svm_fit_with_tolerance(x, y, c, SVM_TOL).map(|(m, _)| m)
}

/// SMO with second-order working-set selection, stopped once the maximal
/// KKT violation falls below `tol`. The bias is then set by exact 1-D
/// minimization of the primal hinge term.
pub fn svm_fit_with_tolerance(x: &DMatrix<f64>, y: &[bool], c: f64, tol: f64) -> Result<(FittedModel, ClassifierTrace)> {
    check_classes(x, y, c)?;
    let st = Standardizer::fit(x);
    let z = st.apply(x);
    let n = z.nrows();
    let k = &z * z.transpose();
    let ys = signs(y);

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let dual = |alpha: &[f64], grad: &[f64]| -> f64 {
        0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>()
    };
    let mut trace = ClassifierTrace {
        objective: vec![0.0],
        converged: false,
    };
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;
    for _ in 0..SVM_MAX_ITER {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            let v = -ys[t] * grad[t];
            let free = if ys[t] > 0.0 { !upper(alpha[t]) } else { !lower(alpha[t]) };
            if free && v >= gmax {
                gmax = v;
                i = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        if i != usize::MAX {
            for t in 0..n {
                let free = if ys[t] > 0.0 { !lower(alpha[t]) } else { !upper(alpha[t]) };
                if !free {
                    continue;
                }
                let v = ys[t] * grad[t];
                gmax2 = gmax2.max(v);
                let diff = gmax + v;
                if diff > 0.0 {
                    let mut quad = k[(i, i)] + k[(t, t)] - 2.0 * k[(i, t)];
                    if quad <= 0.0 {
                        quad = TAU;
                    }
                    let obj = -diff * diff / quad;
                    if obj <= best {
                        best = obj;
                        j = t;
                    }
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax + gmax2 < tol {
            trace.converged = true;
            break;
        }
        let (ai, aj) = (alpha[i], alpha[j]);
        let qij = ys[i] * ys[j] * k[(i, j)];
        if ys[i] != ys[j] {
            let mut quad = k[(i, i)] + k[(j, j)] + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = k[(i, i)] + k[(j, j)] - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..n {
            grad[t] += ys[t] * (ys[i] * k[(i, t)] * di + ys[j] * k[(j, t)] * dj);
        }
        trace.objective.push(dual(&alpha, &grad));
    }

    let ay = DVector::from_iterator(n, alpha.iter().zip(&ys).map(|(a, y)| a * y));
    let beta = z.tr_mul(&ay);
    let scores = &k * &ay;
    let b = best_bias(scores.as_slice(), &ys);
    Ok((linear_model(ModelKind::LinearSvm, c, st, beta.as_slice().to_vec(), b), trace))
}

/// Midpoint of the interval of biases minimizing Σ hinge(yᵢ(sᵢ + b)).
fn best_bias(scores: &[f64], ys: &[f64]) -> f64 {
    let hinge = |b: f64| -> f64 {
        scores.iter().zip(ys).map(|(s, y)| (1.0 - y * (s + b)).max(0.0)).sum()
    };
    let mut points: Vec<f64> = scores.iter().zip(ys).map(|(s, y)| y - s).collect();
    points.sort_by(f64::total_cmp);
    let values: Vec<f64> = points.iter().map(|&b| hinge(b)).collect();
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let slack = 1e-12 * (1.0 + min.abs()) * scores.len() as f64;
    let optimal: Vec<f64> = points
        .iter()
        .zip(&values)
        .filter(|(_, &v)| v <= min + slack)
        .map(|(&b, _)| b)
        .collect();
    let lo = optimal.first().copied().unwrap_or(0.0);
    let hi = optimal.last().copied().unwrap_or(0.0);
    0.5 * (lo + hi)
}
