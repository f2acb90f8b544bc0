//! Generalized linear models for the evaluation layer: ridge-penalized
//! logistic regression fit by iteratively reweighted least squares, ridge
//! linear regression in closed form, prediction metrics, greedy forward-AIC
//! item selection, and the 2x2 chi-square test of independence.
//!
//! Design matrices are passed without an intercept column; the models add
//! one internally and never penalize it.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::linalg::{dot, pearson, Matrix};

/// Link function of a fitted model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkKind {
    /// Logistic regression on a binary response.
    Logit,
    /// Linear regression.
    Identity,
}

/// A fitted (generalized) linear model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GlmModel {
    pub link: LinkKind,
    /// Intercept first, then one coefficient per design column.
    pub coefficients: Vec<f64>,
    /// L2 penalty on the non-intercept coefficients.
    pub lambda: f64,
}

impl GlmModel {
    /// Linear predictor for one row of covariates (without intercept entry).
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.coefficients[0] + dot(&self.coefficients[1..], x)
    }

    /// Fitted mean for one row: the probability under logit, the value
    /// under identity.
    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        let eta = self.linear_predictor(x);
        match self.link {
            LinkKind::Logit => sigmoid(eta),
            LinkKind::Identity => eta,
        }
    }

    /// Fitted means for every row of a design matrix.
    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|r| self.predict_mean(x.row(r))).collect()
    }

    /// Class labels under the logit link: 1 iff the fitted probability
    /// exceeds 0.5 (strictly; a tie predicts 0).
    pub fn classify(&self, x: &Matrix) -> Vec<u8> {
        self.predict(x)
            .into_iter()
            .map(|p| u8::from(p > 0.5))
            .collect()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Solve `a x = b` by Gaussian elimination with partial pivoting. `a` is
/// consumed as scratch. Errors on a (numerically) singular system.
fn solve_dense(mut a: Matrix, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    debug_assert_eq!(a.rows(), n);
    debug_assert_eq!(a.cols(), n);
    for col in 0..n {
        let mut pivot = col;
        let mut best = a.get(col, col).abs();
        for r in col + 1..n {
            let v = a.get(r, col).abs();
            if v > best {
                best = v;
                pivot = r;
            }
        }
        if best < 1e-12 {
            return Err(Error::ConvergenceFailure(
                "singular normal equations; use a positive lambda".into(),
            ));
        }
        if pivot != col {
            for c in 0..n {
                let tmp = a.get(col, c);
                a.set(col, c, a.get(pivot, c));
                a.set(pivot, c, tmp);
            }
            b.swap(col, pivot);
        }
        let diag = a.get(col, col);
        for r in col + 1..n {
            let factor = a.get(r, col) / diag;
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                let v = a.get(r, c) - factor * a.get(col, c);
                a.set(r, c, v);
            }
            b[r] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in r + 1..n {
            acc -= a.get(r, c) * x[c];
        }
        x[r] = acc / a.get(r, r);
    }
    Ok(x)
}

fn validate_xy(x: &Matrix, y: &[f64], lambda: f64) -> Result<()> {
    if x.rows() == 0 {
        return Err(Error::InsufficientData("empty design matrix".into()));
    }
    if x.rows() != y.len() {
        return Err(Error::InvalidInput(format!(
            "design matrix has {} rows, response has {}",
            x.rows(),
            y.len()
        )));
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite values in the fit inputs".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
    }
    Ok(())
}

/// Penalized logistic negative log-likelihood (the objective IRLS minimizes):
/// `-sum[y log mu + (1-y) log(1-mu)] + (lambda/2) * sum_{j>=1} beta_j^2`.
fn logistic_objective(x: &Matrix, y: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let mut nll = 0.0;
    for r in 0..x.rows() {
        let eta = beta[0] + dot(&beta[1..], x.row(r));
        // log(1 + exp(eta)) - y*eta, computed stably.
        let log1p = if eta > 0.0 {
            eta + (-eta).exp().ln_1p()
        } else {
            eta.exp().ln_1p()
        };
        nll += log1p - y[r] * eta;
    }
    let penalty: f64 = beta[1..].iter().map(|b| b * b).sum();
    nll + 0.5 * lambda * penalty
}

const IRLS_MAX_ITER: usize = 100;
const IRLS_GRAD_TOL: f64 = 1e-8;

/// Separation test at a lambda = 0 stationary point: the likelihood has no
/// finite maximizer exactly when the fitted hyperplane classifies every
/// observation with vanishing residual, and nontrivially (slopes, not just a
/// saturated intercept, carry the fit).
fn is_separated(x: &Matrix, y: &[f64], beta: &[f64]) -> bool {
    if x.cols() == 0 {
        return false;
    }
    let slope_norm = beta[1..].iter().map(|b| b * b).sum::<f64>().sqrt();
    if slope_norm <= 1.0 {
        return false;
    }
    let max_resid = (0..x.rows())
        .map(|r| {
            let eta = beta[0] + dot(&beta[1..], x.row(r));
            (sigmoid(eta) - y[r]).abs()
        })
        .fold(0.0, f64::max);
    max_resid < 1e-4
}

/// Ridge-penalized logistic regression by iteratively reweighted least
/// squares (damped Newton), `y` in {0, 1}.
///
/// The intercept is unpenalized. Converges when the gradient norm of the
/// penalized objective drops below 1e-8; errors if 100 iterations do not get
/// there, or if a lambda = 0 fit walks into perfect separation.
pub fn fit_logistic(x: &Matrix, y: &[f64], lambda: f64) -> Result<GlmModel> {
    validate_xy(x, y, lambda)?;
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidInput("logistic response must be 0/1".into()));
    }
    let n = x.rows();
    let p = x.cols() + 1;
    let mut beta = vec![0.0; p];
    let mut objective = logistic_objective(x, y, &beta, lambda);

    for _ in 0..IRLS_MAX_ITER {
        // Gradient g = X~'(mu - y) + lambda D beta, Hessian H = X~' W X~ + lambda D.
        let mut grad = vec![0.0; p];
        let mut hess = Matrix::zeros(p, p);
        for j in 1..p {
            grad[j] = lambda * beta[j];
            hess.set(j, j, lambda);
        }
        let mut row_buf = vec![0.0; p];
        for r in 0..n {
            let xr = x.row(r);
            let eta = beta[0] + dot(&beta[1..], xr);
            let mu = sigmoid(eta).clamp(1e-12, 1.0 - 1e-12);
            let w = mu * (1.0 - mu);
            row_buf[0] = 1.0;
            row_buf[1..].copy_from_slice(xr);
            let resid = mu - y[r];
            for j in 0..p {
                grad[j] += resid * row_buf[j];
            }
            hess.add_outer(&row_buf, &row_buf, w);
        }

        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm < IRLS_GRAD_TOL {
            if lambda == 0.0 && is_separated(x, y, &beta) {
                return Err(Error::ConvergenceFailure(
                    "data is perfectly separated at lambda = 0; refit with a positive lambda".into(),
                ));
            }
            return Ok(GlmModel {
                link: LinkKind::Logit,
                coefficients: beta,
                lambda,
            });
        }

        // Tiny diagonal jitter keeps the solve stable when weights vanish;
        // the stationary point is still judged on the true gradient above.
        for j in 0..p {
            hess.set(j, j, hess.get(j, j) + 1e-10);
        }
        let neg_grad: Vec<f64> = grad.iter().map(|g| -g).collect();
        let delta = solve_dense(hess, neg_grad)?;

        // Step-halving keeps the objective non-increasing.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = beta.iter().zip(&delta).map(|(b, d)| b + step * d).collect();
            let trial_obj = logistic_objective(x, y, &trial, lambda);
            if trial_obj <= objective + 1e-12 {
                beta = trial;
                objective = trial_obj;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::ConvergenceFailure(format!(
                "line search stalled at gradient norm {grad_norm:.3e}"
            )));
        }
    }

    if lambda == 0.0 && is_separated(x, y, &beta) {
        return Err(Error::ConvergenceFailure(
            "data is perfectly separated at lambda = 0; refit with a positive lambda".into(),
        ));
    }
    Err(Error::ConvergenceFailure(format!(
        "IRLS did not converge in {IRLS_MAX_ITER} iterations"
    )))
}

/// Ridge linear regression: the exact solution of the penalized normal
/// equations `(X~' X~ + lambda D) beta = X~' y` with the intercept
/// unpenalized. Errors if the system is singular, advising lambda > 0.
pub fn fit_linear(x: &Matrix, y: &[f64], lambda: f64) -> Result<GlmModel> {
    validate_xy(x, y, lambda)?;
    let n = x.rows();
    let p = x.cols() + 1;
    let mut xtx = Matrix::zeros(p, p);
    let mut xty = vec![0.0; p];
    let mut row_buf = vec![0.0; p];
    for r in 0..n {
        row_buf[0] = 1.0;
        row_buf[1..].copy_from_slice(x.row(r));
        xtx.add_outer(&row_buf, &row_buf, 1.0);
        for j in 0..p {
            xty[j] += row_buf[j] * y[r];
        }
    }
    for j in 1..p {
        xtx.set(j, j, xtx.get(j, j) + lambda);
    }
    let beta = solve_dense(xtx, xty)?;
    Ok(GlmModel {
        link: LinkKind::Identity,
        coefficients: beta,
        lambda,
    })
}

/// Out-of-sample metric of a fitted model: classification accuracy under the
/// logit link, squared Pearson correlation of predictions and truth (OSR^2)
/// under the identity link.
pub fn evaluate_prediction(model: &GlmModel, x_test: &Matrix, y_test: &[f64]) -> Result<f64> {
    if x_test.rows() == 0 {
        return Err(Error::InsufficientData("empty test set".into()));
    }
    if x_test.rows() != y_test.len() {
        return Err(Error::InvalidInput("test design and response sizes differ".into()));
    }
    match model.link {
        LinkKind::Logit => {
            let labels = model.classify(x_test);
            let correct = labels
                .iter()
                .zip(y_test)
                .filter(|(&l, &y)| f64::from(l) == y)
                .count();
            Ok(correct as f64 / y_test.len() as f64)
        }
        LinkKind::Identity => {
            let preds = model.predict(x_test);
            match pearson(&preds, y_test) {
                Ok(r) => Ok(r * r),
                Err(Error::UndefinedCorrelation(msg)) => Err(Error::UndefinedMetric(format!(
                    "OSR^2 undefined: {msg}"
                ))),
                Err(e) => Err(e),
            }
        }
    }
}

/// Log-likelihood of a fitted model on its training data, used for AIC.
fn log_likelihood(model: &GlmModel, x: &Matrix, y: &[f64]) -> f64 {
    match model.link {
        LinkKind::Logit => {
            let mut ll = 0.0;
            for r in 0..x.rows() {
                let mu = model.predict_mean(x.row(r)).clamp(1e-12, 1.0 - 1e-12);
                ll += y[r] * mu.ln() + (1.0 - y[r]) * (1.0 - mu).ln();
            }
            ll
        }
        LinkKind::Identity => {
            // Gaussian ML: sigma^2 = RSS / n.
            let n = x.rows() as f64;
            let mut rss = 0.0;
            for r in 0..x.rows() {
                let e = y[r] - model.predict_mean(x.row(r));
                rss += e * e;
            }
            let sigma2 = (rss / n).max(1e-300);
            -0.5 * n * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0)
        }
    }
}

/// AIC = 2p - 2 loglik. `p` counts the mean-model coefficients including the
/// intercept, plus one for the variance parameter under the identity link.
fn aic(model: &GlmModel, x: &Matrix, y: &[f64]) -> f64 {
    let mut p = model.coefficients.len() as f64;
    if model.link == LinkKind::Identity {
        p += 1.0;
    }
    2.0 * p - 2.0 * log_likelihood(model, x, y)
}

/// The order in which greedy forward selection would add the columns of
/// `outcomes`, together with the AIC after each addition.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardAicPath {
    pub order: Vec<usize>,
    pub aic: Vec<f64>,
}

/// Greedy forward AIC selection over the columns of an n-by-J outcome
/// matrix: at each step add the column whose (unpenalized) GLM most reduces
/// the AIC for `target`, and keep going until every column is placed.
pub fn forward_aic_order(outcomes: &Matrix, target: &[f64], link: LinkKind) -> Result<ForwardAicPath> {
    if outcomes.cols() == 0 {
        return Err(Error::InvalidInput("no outcome columns to order".into()));
    }
    if outcomes.rows() != target.len() {
        return Err(Error::InvalidInput("outcomes and target sizes differ".into()));
    }
    let j_total = outcomes.cols();
    let mut remaining: Vec<usize> = (0..j_total).collect();
    let mut selected: Vec<usize> = Vec::with_capacity(j_total);
    let mut aics: Vec<f64> = Vec::with_capacity(j_total);

    while !remaining.is_empty() {
        let mut best: Option<(usize, f64)> = None;
        for (slot, &cand) in remaining.iter().enumerate() {
            let cols: Vec<usize> = selected.iter().chain([&cand]).copied().collect();
            let mut design = Matrix::zeros(outcomes.rows(), cols.len());
            for r in 0..outcomes.rows() {
                for (c, &col) in cols.iter().enumerate() {
                    design.set(r, c, outcomes.get(r, col));
                }
            }
            let model = match link {
                LinkKind::Logit => fit_logistic(&design, target, 0.0)?,
                LinkKind::Identity => fit_linear(&design, target, 0.0)?,
            };
            let score = aic(&model, &design, target);
            let better = match best {
                None => true,
                Some((_, cur)) => score < cur,
            };
            if better {
                best = Some((slot, score));
            }
        }
        let (slot, score) = best.expect("non-empty candidates");
        selected.push(remaining.remove(slot));
        aics.push(score);
    }

    Ok(ForwardAicPath { order: selected, aic: aics })
}

/// Pearson chi-square test of independence on a 2x2 contingency table,
/// one degree of freedom, no continuity correction. Returns the statistic
/// and the upper-tail p-value.
pub fn chi_square_independence(table: &[[f64; 2]; 2]) -> Result<(f64, f64)> {
    for row in table {
        for &v in row {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidTable("counts must be finite and non-negative".into()));
            }
        }
    }
    let row_sums = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let col_sums = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    let total = row_sums[0] + row_sums[1];
    if row_sums.iter().chain(&col_sums).any(|&m| m == 0.0) {
        return Err(Error::InvalidTable("a marginal total is zero".into()));
    }
    let mut stat = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let expected = row_sums[i] * col_sums[j] / total;
            stat += (table[i][j] - expected).powi(2) / expected;
        }
    }
    let p = ChiSquared::new(1.0).expect("df 1").sf(stat);
    Ok((stat, p))
}
