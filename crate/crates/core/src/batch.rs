//! Batch maximum-likelihood estimation of the GLNAR parameters.
//!
//! (phi, sigma2) have closed-form solutions at a fixed shape, so the fit
//! alternates that update with a safeguarded Newton-Raphson step on nu:
//! compute the Newton decrement, stop when it is small, otherwise backtrack
//! along the Newton (or, when curvature fails, gradient) direction. The
//! transform-scale design depends on nu and is rebuilt after every shape move.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::PowerSeries;
use crate::error::{Error, Result};
use crate::gln::{
    ln_one_minus_pow, pow_ratio, transform_raw, u_raw, v_raw, GlnShape, ThetaState, NU_MAX, NU_MIN,
};

/// Condition-number ceiling for the normal equations.
const MAX_CONDITION: f64 = 1e12;

/// Transform-scale regression data at a fixed shape.
///
/// Each row holds one usable forecast target: the transformed observation,
/// its p transformed lags, and the first and second shape derivatives of all
/// of them. Rows whose lags cross a grid gap are excluded.
#[derive(Debug, Clone)]
pub struct DesignData {
    p: usize,
    nu: f64,
    /// Raw target values x_t, one per row.
    x: Vec<f64>,
    /// Raw lag values, row-major, p per row (most recent first).
    x_lags: Vec<f64>,
    y: DVector<f64>,
    y_lags: DMatrix<f64>,
    u: DVector<f64>,
    u_lags: DMatrix<f64>,
    v: DVector<f64>,
    v_lags: DMatrix<f64>,
    /// sum_t ln(1 - x_t^nu) over targets.
    sum_ln_one_minus_pow: f64,
    /// sum_t ln(x_t) x_t^nu / (1 - x_t^nu).
    sum_ln_ratio: f64,
    /// sum_t ln(x_t)^2 x_t^nu / (1 - x_t^nu)^2.
    sum_ln2_ratio: f64,
}

impl DesignData {
    pub fn rows(&self) -> usize {
        self.x.len()
    }

    pub fn order(&self) -> usize {
        self.p
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn lag_matrix(&self) -> &DMatrix<f64> {
        &self.y_lags
    }

    /// Recompute every transform-scale quantity at a new shape.
    pub fn rebuild(&mut self, shape: GlnShape) {
        let nu = shape.value();
        self.nu = nu;
        self.sum_ln_one_minus_pow = 0.0;
        self.sum_ln_ratio = 0.0;
        self.sum_ln2_ratio = 0.0;
        for (t, &x) in self.x.iter().enumerate() {
            self.y[t] = transform_raw(x, nu);
            self.u[t] = u_raw(x, nu);
            self.v[t] = v_raw(x, nu);
            let lnx = x.ln();
            let r = pow_ratio(x, nu);
            self.sum_ln_one_minus_pow += ln_one_minus_pow(x, nu);
            self.sum_ln_ratio += lnx * r;
            self.sum_ln2_ratio += lnx * lnx * r * (1.0 + r);
            for k in 0..self.p {
                let xl = self.x_lags[t * self.p + k];
                self.y_lags[(t, k)] = transform_raw(xl, nu);
                self.u_lags[(t, k)] = u_raw(xl, nu);
                self.v_lags[(t, k)] = v_raw(xl, nu);
            }
        }
    }

    /// Negative log-likelihood (parameter-free constant dropped) at the
    /// design's shape and the given AR coefficients and variance.
    pub fn objective(&self, phi: &[f64], sigma2: f64) -> f64 {
        let m = self.rows() as f64;
        let rss = self.residual_sum_of_squares(phi);
        0.5 * m * sigma2.ln() - m * self.nu.ln() + self.sum_ln_one_minus_pow
            + 0.5 * rss / sigma2
    }

    /// Objective at a candidate shape with (phi, sigma2) held fixed; used by
    /// the line search without touching the stored design.
    pub fn objective_at_nu(&self, nu: f64, phi: &[f64], sigma2: f64) -> f64 {
        let m = self.rows() as f64;
        let mut sum_lnp = 0.0;
        let mut rss = 0.0;
        for (t, &x) in self.x.iter().enumerate() {
            sum_lnp += ln_one_minus_pow(x, nu);
            let mut eps = transform_raw(x, nu);
            for (k, &c) in phi.iter().enumerate() {
                eps -= c * transform_raw(self.x_lags[t * self.p + k], nu);
            }
            rss += eps * eps;
        }
        0.5 * m * sigma2.ln() - m * nu.ln() + sum_lnp + 0.5 * rss / sigma2
    }

    fn residual_sum_of_squares(&self, phi: &[f64]) -> f64 {
        let phi = DVector::from_column_slice(phi);
        let e = &self.y - &self.y_lags * phi;
        e.dot(&e)
    }
}

/// Assemble the regression design from a clipped series.
///
/// Requires every value strictly inside (0, 1); a forecast target is usable
/// only when its p lags sit on consecutive grid steps.
pub fn build_design(series: &PowerSeries, p: usize, shape: GlnShape) -> Result<DesignData> {
    if p == 0 {
        return Err(Error::Config("lag order p must be at least 1".into()));
    }
    let records = series.records();
    for r in records {
        if !(r.value > 0.0 && r.value < 1.0) {
            return Err(Error::Domain(format!(
                "design requires values strictly inside (0, 1); found {} at {}",
                r.value, r.timestamp
            )));
        }
    }
    let mut x = Vec::new();
    let mut x_lags = Vec::new();
    for seg in series.segments() {
        if seg.len() < p + 1 {
            continue;
        }
        for t in seg.start + p..seg.end {
            x.push(records[t].value);
            for k in 1..=p {
                x_lags.push(records[t - k].value);
            }
        }
    }
    if x.is_empty() {
        return Err(Error::Estimation(format!(
            "insufficient data: no run of {} consecutive observations",
            p + 1
        )));
    }
    let rows = x.len();
    let mut design = DesignData {
        p,
        nu: shape.value(),
        x,
        x_lags,
        y: DVector::zeros(rows),
        y_lags: DMatrix::zeros(rows, p),
        u: DVector::zeros(rows),
        u_lags: DMatrix::zeros(rows, p),
        v: DVector::zeros(rows),
        v_lags: DMatrix::zeros(rows, p),
        sum_ln_one_minus_pow: 0.0,
        sum_ln_ratio: 0.0,
        sum_ln2_ratio: 0.0,
    };
    design.rebuild(shape);
    Ok(design)
}

/// Ordinary least squares with residual variance rss / rows.
///
/// Shared by the transform-scale estimator and the Gaussian benchmark.
pub(crate) fn least_squares(
    targets: &DVector<f64>,
    regressors: &DMatrix<f64>,
) -> Result<(DVector<f64>, f64)> {
    let gram = regressors.transpose() * regressors;
    let eigen = gram.clone().symmetric_eigen();
    let max_eig = eigen.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_eig = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_eig > 0.0) || max_eig / min_eig > MAX_CONDITION {
        return Err(Error::Estimation(
            "normal equations are singular or ill-conditioned; try a smaller lag order p".into(),
        ));
    }
    let rhs = regressors.transpose() * targets;
    let coef = gram
        .cholesky()
        .ok_or_else(|| {
            Error::Estimation("normal equations not positive definite; try a smaller p".into())
        })?
        .solve(&rhs);
    let residual = targets - regressors * &coef;
    let sigma2 = residual.dot(&residual) / targets.len() as f64;
    Ok((coef, sigma2))
}

/// Closed-form (phi, sigma2) at the design's shape.
pub fn closed_form_phi_sigma(design: &DesignData) -> Result<(Vec<f64>, f64)> {
    let (coef, sigma2) = least_squares(&design.y, &design.y_lags)?;
    Ok((coef.iter().copied().collect(), sigma2))
}

/// First derivative of the objective with respect to nu.
pub fn nu_score(design: &DesignData, theta: &ThetaState) -> f64 {
    debug_assert!((theta.nu() - design.nu).abs() < 1e-12, "design built for a different shape");
    let m = design.rows() as f64;
    let phi = DVector::from_column_slice(theta.phi());
    let e = &design.y - &design.y_lags * &phi;
    let eu = &design.u - &design.u_lags * &phi;
    -m / theta.nu() - design.sum_ln_ratio + eu.dot(&e) / theta.sigma2()
}

/// Second derivative of the objective with respect to nu.
pub fn nu_curvature(design: &DesignData, theta: &ThetaState) -> f64 {
    debug_assert!((theta.nu() - design.nu).abs() < 1e-12, "design built for a different shape");
    let m = design.rows() as f64;
    let phi = DVector::from_column_slice(theta.phi());
    let e = &design.y - &design.y_lags * &phi;
    let eu = &design.u - &design.u_lags * &phi;
    let ev = &design.v - &design.v_lags * &phi;
    m / (theta.nu() * theta.nu()) - design.sum_ln2_ratio
        + ev.dot(&e) / theta.sigma2()
        + eu.dot(&eu) / theta.sigma2()
}

/// Stopping and line-search controls of the batch fit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitOptions {
    /// Stop when the half Newton decrement drops to this level.
    pub epsilon: f64,
    pub max_iter: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo_c: f64,
    /// Backtracking shrink factor.
    pub shrink: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { epsilon: 1e-3, max_iter: 100, armijo_c: 1e-4, shrink: 0.5 }
    }
}

/// Result of a batch fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchFit {
    #[serde(flatten)]
    pub theta: ThetaState,
    pub iterations: usize,
    pub converged: bool,
    /// Final half Newton decrement.
    pub decrement: f64,
    /// Objective after each coefficient update; non-increasing.
    pub nll_trace: Vec<f64>,
}

/// Fit (phi, sigma2, nu) on a clipped series by alternating closed-form
/// coefficient updates with safeguarded Newton steps on the shape.
pub fn fit_batch(series: &PowerSeries, p: usize, options: &FitOptions) -> Result<BatchFit> {
    if options.max_iter == 0 {
        return Err(Error::Config("max_iter must be at least 1".into()));
    }
    let mut nu = 1.0;
    let mut design = build_design(series, p, GlnShape::new(nu)?)?;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut decrement = f64::INFINITY;
    let mut iterations = 0;
    let mut phi: Vec<f64> = vec![0.0; p];
    let mut sigma2 = 1.0;

    while iterations < options.max_iter {
        iterations += 1;
        let (phi_new, sigma2_new) = closed_form_phi_sigma(&design)?;
        phi = phi_new;
        sigma2 = sigma2_new;
        let nll = design.objective(&phi, sigma2);
        if !nll.is_finite() {
            return Err(Error::Estimation(format!("non-finite objective at nu={nu}")));
        }
        trace.push(nll);

        let theta = ThetaState::new(phi.clone(), sigma2, nu)?;
        let g = nu_score(&design, &theta);
        let curv = nu_curvature(&design, &theta);
        if !g.is_finite() || !curv.is_finite() {
            return Err(Error::Estimation(format!("non-finite shape derivatives at nu={nu}")));
        }

        let direction = if curv > 0.0 {
            decrement = 0.5 * g * g / curv;
            if decrement <= options.epsilon {
                converged = true;
                break;
            }
            -g / curv
        } else {
            // objective not locally convex in nu; fall back to steepest descent
            -g
        };

        let mut accepted = None;
        let mut step = 1.0;
        // summing the objective over all rows leaves rounding noise of about
        // this size; smaller decreases cannot be resolved by comparison, but
        // the derivative-based step is still trustworthy there
        let noise_floor = nll.abs() * f64::EPSILON * (design.rows() as f64).sqrt();
        for _ in 0..60 {
            let candidate = (nu + step * direction).clamp(NU_MIN, NU_MAX);
            if (candidate - nu).abs() < 1e-15 {
                step *= options.shrink;
                continue;
            }
            let expected_decrease = (g * (candidate - nu)).abs();
            if expected_decrease < noise_floor {
                accepted = Some(candidate);
                break;
            }
            let obj = design.objective_at_nu(candidate, &phi, sigma2);
            if obj.is_finite() && obj <= nll + options.armijo_c * g * (candidate - nu) {
                accepted = Some(candidate);
                break;
            }
            step *= options.shrink;
        }
        match accepted {
            Some(candidate) => {
                nu = candidate;
                design.rebuild(GlnShape::new(nu)?);
            }
            None => break, // no decrease available; report non-converged
        }
    }

    if !converged {
        // keep (phi, sigma2) consistent with the final shape
        let (phi_new, sigma2_new) = closed_form_phi_sigma(&design)?;
        phi = phi_new;
        sigma2 = sigma2_new;
    }
    Ok(BatchFit {
        theta: ThetaState::new(phi, sigma2, nu)?,
        iterations,
        converged,
        decrement,
        nll_trace: trace,
    })
}
