//! L2-regularized logistic regression.
//!
//! Minimizes
//!
//! ```text
//! C * sum_i log(1 + exp(-y_i (w.x_i + b))) + 0.5 * |w|^2
//! ```
//!
//! with `y_i` in {-1, +1} and the intercept `b` unpenalized, by truncated
//! Newton (conjugate-gradient inner solves on Hessian-vector products) with
//! Armijo backtracking. Training sets with a single class have no finite
//! minimizer in `b`; for those the intercept is penalized like a weight
//! (`+ 0.5 * b^2`) and [`LinearModel::intercept_penalized`] is set.

use serde::{Deserialize, Serialize};

use super::{ClassifierError, ScoreVector};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub penalty: f64,
    pub intercept_penalized: bool,
}

impl LinearModel {
    pub fn decision(&self, features: &FeatureMatrix, row: usize) -> f64 {
        features.row_dot(row, &self.weights) + self.intercept
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Target for the infinity norm of the objective gradient.
    pub tolerance: f64,
    /// Largest gradient norm still accepted if the line search stalls on
    /// floating-point resolution before `tolerance` is reached.
    pub accept_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            accept_tolerance: 1e-6,
            max_iterations: 100,
        }
    }
}

pub fn fit_logreg(
    features: &FeatureMatrix,
    labels: &[bool],
    penalty: f64,
) -> Result<LinearModel, ClassifierError> {
    fit_with(features, labels, penalty, &FitOptions::default())
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

struct Problem<'a> {
    x: &'a FeatureMatrix,
    y: Vec<f64>,
    c: f64,
    intercept_penalty: f64,
}

struct Evaluation {
    value: f64,
    gradient: Vec<f64>,
    curvature: Vec<f64>,
}

impl Problem<'_> {
    fn dim(&self) -> usize {
        self.x.n_cols() + 1
    }

    fn margins(&self, theta: &[f64]) -> Vec<f64> {
        let (w, b) = theta.split_at(self.x.n_cols());
        (0..self.x.n_rows())
            .map(|i| self.y[i] * (self.x.row_dot(i, w) + b[0]))
            .collect()
    }

    fn value(&self, theta: &[f64]) -> f64 {
        let d = self.x.n_cols();
        let loss: f64 = self.margins(theta).into_iter().map(|m| softplus(-m)).sum();
        let w_sq: f64 = theta[..d].iter().map(|v| v * v).sum();
        self.c * loss + 0.5 * w_sq + 0.5 * self.intercept_penalty * theta[d] * theta[d]
    }

    fn evaluate(&self, theta: &[f64]) -> Evaluation {
        let d = self.x.n_cols();
        let margins = self.margins(theta);
        let mut gradient = theta.to_vec();
        gradient[d] *= self.intercept_penalty;
        let mut loss = 0.0;
        let mut curvature = Vec::with_capacity(margins.len());
        for (i, &m) in margins.iter().enumerate() {
            loss += softplus(-m);
            let s = sigmoid(-m);
            let coef = -self.c * self.y[i] * s;
            let (cols, vals) = self.x.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                gradient[c] += coef * v;
            }
            gradient[d] += coef;
            curvature.push(s * (1.0 - s));
        }
        let w_sq: f64 = theta[..d].iter().map(|v| v * v).sum();
        Evaluation {
            value: self.c * loss
                + 0.5 * w_sq
                + 0.5 * self.intercept_penalty * theta[d] * theta[d],
            gradient,
            curvature,
        }
    }

    fn hessian_times(&self, curvature: &[f64], v: &[f64]) -> Vec<f64> {
        let d = self.x.n_cols();
        let mut out = v.to_vec();
        out[d] *= self.intercept_penalty;
        for (i, &h) in curvature.iter().enumerate() {
            let u = self.x.row_dot(i, &v[..d]) + v[d];
            let coef = self.c * h * u;
            let (cols, vals) = self.x.row(i);
            for (&c, &val) in cols.iter().zip(vals) {
                out[c] += coef * val;
            }
            out[d] += coef;
        }
        out
    }

    /// Approximately solves `H p = -g` by conjugate gradients.
    fn newton_direction(&self, curvature: &[f64], gradient: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let g_norm = norm2(gradient);
        let tol = g_norm.sqrt().min(0.5) * g_norm;
        let max_steps = n.clamp(10, 2000);
        let mut p = vec![0.0; n];
        let mut r: Vec<f64> = gradient.iter().map(|g| -g).collect();
        let mut dir = r.clone();
        let mut rs = dot(&r, &r);
        for _ in 0..max_steps {
            if rs.sqrt() <= tol {
                break;
            }
            let hd = self.hessian_times(curvature, &dir);
            let curv = dot(&dir, &hd);
            if curv <= 0.0 {
                break;
            }
            let alpha = rs / curv;
            for k in 0..n {
                p[k] += alpha * dir[k];
                r[k] -= alpha * hd[k];
            }
            let rs_next = dot(&r, &r);
            let beta = rs_next / rs;
            for k in 0..n {
                dir[k] = r[k] + beta * dir[k];
            }
            rs = rs_next;
        }
        if p.iter().all(|&v| v == 0.0) {
            // CG made no progress; fall back to steepest descent.
            return gradient.iter().map(|g| -g).collect();
        }
        p
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub(crate) fn fit_with(
    features: &FeatureMatrix,
    labels: &[bool],
    penalty: f64,
    options: &FitOptions,
) -> Result<LinearModel, ClassifierError> {
    if !(penalty > 0.0 && penalty.is_finite()) {
        return Err(ClassifierError::InvalidPenalty(penalty));
    }
    if features.n_rows() != labels.len() {
        return Err(ClassifierError::LabelCount {
            rows: features.n_rows(),
            labels: labels.len(),
        });
    }
    for row in 0..features.n_rows() {
        let (cols, vals) = features.row(row);
        if let Some(k) = vals.iter().position(|v| !v.is_finite()) {
            return Err(ClassifierError::NonFinite { row, col: cols[k] });
        }
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(ClassifierError::NoPositive);
    }
    let single_class = positives == labels.len();
    let problem = Problem {
        x: features,
        y: labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect(),
        c: penalty,
        intercept_penalty: if single_class { 1.0 } else { 0.0 },
    };

    let d = features.n_cols();
    let mut theta = vec![0.0; d + 1];
    let mut eval = problem.evaluate(&theta);
    let finish = |theta: Vec<f64>| {
        let intercept = theta[d];
        let mut weights = theta;
        weights.truncate(d);
        LinearModel {
            weights,
            intercept,
            penalty,
            intercept_penalized: single_class,
        }
    };

    for iteration in 0..options.max_iterations {
        let g_inf = norm_inf(&eval.gradient);
        if g_inf <= options.tolerance {
            return Ok(finish(theta));
        }
        let direction = problem.newton_direction(&eval.curvature, &eval.gradient);
        let slope = dot(&eval.gradient, &direction);
        let mut step = 1.0;
        let mut accepted = None;
        while step >= 1e-12 {
            let candidate: Vec<f64> = theta
                .iter()
                .zip(&direction)
                .map(|(t, p)| t + step * p)
                .collect();
            let value = problem.value(&candidate);
            if value <= eval.value + 1e-4 * step * slope {
                accepted = Some(candidate);
                break;
            }
            if step == 1.0 {
                // Near the optimum the decrease can drop below the
                // resolution of the objective; take the full step if it
                // shrinks the gradient instead.
                let next = problem.evaluate(&candidate);
                if norm_inf(&next.gradient) < 0.5 * g_inf {
                    theta = candidate;
                    eval = next;
                    step = f64::NAN;
                    break;
                }
            }
            step *= 0.5;
        }
        if step.is_nan() {
            continue;
        }
        match accepted {
            Some(candidate) => {
                theta = candidate;
                eval = problem.evaluate(&theta);
            }
            None if g_inf <= options.accept_tolerance => return Ok(finish(theta)),
            None => {
                return Err(ClassifierError::NotConverged {
                    grad_norm: g_inf,
                    iterations: iteration,
                })
            }
        }
    }
    let g_inf = norm_inf(&eval.gradient);
    if g_inf <= options.accept_tolerance {
        Ok(finish(theta))
    } else {
        Err(ClassifierError::NotConverged {
            grad_norm: g_inf,
            iterations: options.max_iterations,
        })
    }
}

/// Objective gradient `[dw..., db]` of `model` on a training set, using the
/// same penalty terms the model was fit with.
pub fn objective_gradient(model: &LinearModel, features: &FeatureMatrix, labels: &[bool]) -> Vec<f64> {
    let problem = Problem {
        x: features,
        y: labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect(),
        c: model.penalty,
        intercept_penalty: if model.intercept_penalized { 1.0 } else { 0.0 },
    };
    let mut theta = model.weights.clone();
    theta.push(model.intercept);
    problem.evaluate(&theta).gradient
}

/// Sigmoid of the linear score for every row, kept strictly inside (0, 1).
pub fn predict_proba(model: &LinearModel, features: &FeatureMatrix) -> Result<ScoreVector, ClassifierError> {
    if model.weights.len() != features.n_cols() {
        return Err(ClassifierError::DimensionMismatch {
            model: model.weights.len(),
            matrix: features.n_cols(),
        });
    }
    let upper = 1.0 - f64::EPSILON / 2.0;
    let scores = (0..features.n_rows())
        .map(|i| sigmoid(model.decision(features, i)).clamp(f64::MIN_POSITIVE, upper))
        .collect();
    ScoreVector::new(scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grad_inf(model: &LinearModel, x: &FeatureMatrix, y: &[bool]) -> f64 {
        norm_inf(&objective_gradient(model, x, y))
    }

    #[test]
    fn zero_features_give_prior_intercept() {
        let x = FeatureMatrix::from_dense(&vec![vec![0.0, 0.0]; 5]);
        let y = [true, true, false, false, false];
        let m = fit_logreg(&x, &y, 1.0).unwrap();
        assert_eq!(m.weights, vec![0.0, 0.0]);
        assert!((m.intercept - (2.0f64 / 3.0).ln()).abs() < 1e-9);
    }

    #[test]
    fn single_positive_scores_above_half() {
        let x = FeatureMatrix::from_dense(&[vec![0.6], vec![0.0], vec![0.3]]);
        let train = x.select_rows(&[0]);
        let m = fit_logreg(&train, &[true], 1.0).unwrap();
        assert!(m.intercept_penalized);
        assert!(grad_inf(&m, &train, &[true]) <= 1e-6);
        let s = predict_proba(&m, &x).unwrap();
        assert!(s[0] > 0.5);
        assert!(s[0] > s[2] && s[2] > s[1]);
    }

    #[test]
    fn no_positive_is_an_error() {
        let x = FeatureMatrix::from_dense(&[vec![1.0]]);
        assert!(matches!(fit_logreg(&x, &[false], 1.0), Err(ClassifierError::NoPositive)));
    }

    #[test]
    fn non_finite_features_are_rejected() {
        let x = FeatureMatrix::from_dense(&[vec![f64::NAN, 0.5], vec![0.1, 0.2]]);
        assert!(matches!(
            fit_logreg(&x, &[true, false], 1.0),
            Err(ClassifierError::NonFinite { row: 0, col: 0 })
        ));
    }

    #[test]
    fn invalid_penalty() {
        let x = FeatureMatrix::from_dense(&[vec![1.0]]);
        assert!(fit_logreg(&x, &[true], 0.0).is_err());
        assert!(fit_logreg(&x, &[true], f64::NAN).is_err());
    }

    #[test]
    fn predict_checks_dimensions() {
        let m = LinearModel {
            weights: vec![0.0; 3],
            intercept: 0.0,
            penalty: 1.0,
            intercept_penalized: false,
        };
        let x = FeatureMatrix::from_dense(&[vec![0.1, 0.2]]);
        assert!(matches!(
            predict_proba(&m, &x),
            Err(ClassifierError::DimensionMismatch { model: 3, matrix: 2 })
        ));
    }

    #[test]
    fn zero_model_scores_one_half() {
        let m = LinearModel {
            weights: vec![0.0; 2],
            intercept: 0.0,
            penalty: 1.0,
            intercept_penalized: false,
        };
        let x = FeatureMatrix::from_dense(&[vec![0.1, 0.2], vec![0.0, 0.9]]);
        assert_eq!(predict_proba(&m, &x).unwrap().values(), [0.5, 0.5]);
    }

    #[test]
    fn large_intercept_saturates_inside_unit_interval() {
        let x = FeatureMatrix::from_dense(&[vec![0.5]]);
        for b in [10.0, 40.0, 1e6] {
            let m = LinearModel {
                weights: vec![1.0],
                intercept: b,
                penalty: 1.0,
                intercept_penalized: false,
            };
            let s = predict_proba(&m, &x).unwrap()[0];
            assert!(s > 0.99 && s < 1.0);
        }
    }

    #[test]
    fn hand_computed_probabilities() {
        let m = LinearModel {
            weights: vec![2.0, -1.0],
            intercept: 0.5,
            penalty: 1.0,
            intercept_penalized: false,
        };
        let x = FeatureMatrix::from_dense(&[vec![0.5, 0.0], vec![0.0, 0.5], vec![0.25, 0.75]]);
        let s = predict_proba(&m, &x).unwrap();
        // z = 1.5, 0.0, 0.25
        let expected = [0.817_574_476_193_643_7, 0.5, 0.562_176_500_885_798_4];
        for (a, e) in s.values().iter().zip(expected) {
            assert!((a - e).abs() < 1e-15, "{a} vs {e}");
        }
    }
}
