//! The generalized logit-normal distribution on (0, 1).
//!
//! A variable X in (0, 1) follows this law when its transform
//! y = ln(x^nu / (1 - x^nu)) is Gaussian. The shape parameter nu bends the
//! classic logit link; nu = 1 recovers the standard logit-normal.
//!
//! All kernels are written in log-space forms (`ln_1p`, `exp_m1`) so they stay
//! accurate for observations clipped as close as 1e-3 to the bounds.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::quad;

/// Lower bound of the admissible shape range.
pub const NU_MIN: f64 = 1e-3;
/// Upper bound of the admissible shape range; keeps x^nu away from underflow.
pub const NU_MAX: f64 = 20.0;

pub(crate) fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

pub(crate) fn std_normal_cdf(z: f64) -> f64 {
    std_normal().cdf(z)
}

pub(crate) fn std_normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Shape parameter of the transform, validated strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GlnShape(f64);

impl GlnShape {
    pub fn new(nu: f64) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::Domain(format!("shape nu must be positive, got {nu}")));
        }
        Ok(GlnShape(nu))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Parameter vector of a GLN autoregressive model: (phi_1..phi_p, sigma2, nu).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaState {
    phi: Vec<f64>,
    sigma2: f64,
    nu: f64,
}

impl ThetaState {
    pub fn new(phi: Vec<f64>, sigma2: f64, nu: f64) -> Result<Self> {
        if phi.is_empty() {
            return Err(Error::Domain("lag order p must be at least 1".into()));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::Domain(format!(
                "innovation variance must be positive, got {sigma2}"
            )));
        }
        GlnShape::new(nu)?;
        Ok(ThetaState { phi, sigma2, nu })
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn shape(&self) -> GlnShape {
        GlnShape(self.nu)
    }

    /// Lag order p.
    pub fn order(&self) -> usize {
        self.phi.len()
    }
}

fn check_open_unit(x: f64) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::Domain(format!("value {x} outside the open interval (0, 1)")));
    }
    Ok(())
}

/// ln(1 - x^nu), computed without forming x^nu when it is close to 1.
#[inline]
pub(crate) fn ln_one_minus_pow(x: f64, nu: f64) -> f64 {
    let t = nu * x.ln(); // < 0 on (0, 1)
    (-t.exp_m1()).ln()
}

/// x^nu / (1 - x^nu).
#[inline]
pub(crate) fn pow_ratio(x: f64, nu: f64) -> f64 {
    let t = nu * x.ln();
    t.exp() / (-t.exp_m1())
}

#[inline]
pub(crate) fn transform_raw(x: f64, nu: f64) -> f64 {
    let t = nu * x.ln();
    t - (-t.exp_m1()).ln()
}

#[inline]
pub(crate) fn inverse_transform_raw(y: f64, nu: f64) -> f64 {
    // ln sigmoid(y), stable on both tails
    let ln_sig = if y >= 0.0 {
        -(-y).exp().ln_1p()
    } else {
        y - y.exp().ln_1p()
    };
    (ln_sig / nu).exp().clamp(f64::MIN_POSITIVE, 1.0 - 1e-15)
}

/// dy/dnu at fixed x: u = ln(x) (1 + x^nu / (1 - x^nu)) = ln(x) / (1 - x^nu).
#[inline]
pub(crate) fn u_raw(x: f64, nu: f64) -> f64 {
    let t = nu * x.ln();
    x.ln() / (-t.exp_m1())
}

/// du/dnu at fixed x: v = u ln(x) x^nu / (1 - x^nu).
#[inline]
pub(crate) fn v_raw(x: f64, nu: f64) -> f64 {
    u_raw(x, nu) * x.ln() * pow_ratio(x, nu)
}

/// Transform a value in (0, 1) to the Gaussian scale: y = ln(x^nu / (1 - x^nu)).
pub fn transform(x: f64, shape: GlnShape) -> Result<f64> {
    check_open_unit(x)?;
    Ok(transform_raw(x, shape.value()))
}

/// Map a transform-scale value back into (0, 1): x = (e^y / (1 + e^y))^(1/nu).
pub fn inverse_transform(y: f64, shape: GlnShape) -> f64 {
    inverse_transform_raw(y, shape.value())
}

/// Shape derivatives (u, v) of the transform at x: u = dy/dnu, v = du/dnu.
pub fn nu_derivatives(x: f64, shape: GlnShape) -> Result<(f64, f64)> {
    check_open_unit(x)?;
    let nu = shape.value();
    Ok((u_raw(x, nu), v_raw(x, nu)))
}

/// Density of the GLN law with transform-scale mean mu and variance sigma2.
pub fn density(x: f64, mu: f64, sigma2: f64, shape: GlnShape) -> Result<f64> {
    Ok(log_density(x, mu, sigma2, shape)?.exp())
}

/// Log-density of the GLN law.
pub fn log_density(x: f64, mu: f64, sigma2: f64, shape: GlnShape) -> Result<f64> {
    check_open_unit(x)?;
    if !(sigma2 > 0.0) {
        return Err(Error::Domain(format!("variance must be positive, got {sigma2}")));
    }
    let nu = shape.value();
    let z = transform_raw(x, nu) - mu;
    Ok(-0.5 * (2.0 * std::f64::consts::PI * sigma2).ln() + nu.ln()
        - x.ln()
        - ln_one_minus_pow(x, nu)
        - 0.5 * z * z / sigma2)
}

/// Point-summary rule for a predictive distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointRule {
    /// Closed-form and bound-respecting; the default.
    #[default]
    Median,
    /// Predictive expectation by quadrature.
    Mean,
}

/// One-step predictive GLN law: transform-scale mean, variance and shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlnPredictive {
    pub mu: f64,
    pub sigma2: f64,
    pub nu: f64,
}

impl GlnPredictive {
    pub fn new(mu: f64, sigma2: f64, nu: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::Domain(format!(
                "predictive variance must be positive, got {sigma2}"
            )));
        }
        GlnShape::new(nu)?;
        Ok(GlnPredictive { mu, sigma2, nu })
    }

    /// Predictive CDF on [0, 1]; the bounds carry F(0) = 0 and F(1) = 1.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("cdf argument {x} outside [0, 1]")));
        }
        if x == 0.0 {
            return Ok(0.0);
        }
        if x == 1.0 {
            return Ok(1.0);
        }
        let z = (transform_raw(x, self.nu) - self.mu) / self.sigma2.sqrt();
        Ok(std_normal_cdf(z))
    }

    /// Predictive quantile for tau in (0, 1).
    pub fn quantile(&self, tau: f64) -> Result<f64> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::Domain(format!("quantile level {tau} outside (0, 1)")));
        }
        let y = self.mu + self.sigma2.sqrt() * std_normal_quantile(tau);
        Ok(inverse_transform_raw(y, self.nu))
    }

    /// Predictive median, the inverse transform of mu.
    pub fn median(&self) -> f64 {
        inverse_transform_raw(self.mu, self.nu)
    }

    /// Predictive mean, integral of x against the density over (0, 1).
    pub fn mean(&self) -> f64 {
        let shape = GlnShape(self.nu);
        quad::integrate_unit(|x| x * density(x, self.mu, self.sigma2, shape).unwrap_or(0.0))
    }

    /// Point forecast under `rule`, with clip-aware rounding: summaries below
    /// `delta` report 0, above `1 - delta` report 1. Pass `delta = 0` to
    /// disable the rounding.
    pub fn point(&self, rule: PointRule, delta: f64) -> f64 {
        let raw = match rule {
            PointRule::Median => self.median(),
            PointRule::Mean => self.mean(),
        };
        if raw < delta {
            0.0
        } else if raw > 1.0 - delta {
            1.0
        } else {
            raw
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn shape(nu: f64) -> GlnShape {
        GlnShape::new(nu).unwrap()
    }

    /// Test-only adaptive Simpson integrator, independent of quad.rs.
    fn adaptive_simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, m: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
        }
        fn recurse<F: Fn(f64) -> f64>(
            f: &F,
            a: f64,
            b: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let left = simpson(f, a, 0.5 * (a + m), m);
            let right = simpson(f, m, 0.5 * (m + b), b);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                recurse(f, a, m, left, tol / 2.0, depth - 1)
                    + recurse(f, m, b, right, tol / 2.0, depth - 1)
            }
        }
        let m = 0.5 * (a + b);
        recurse(&f, a, b, simpson(&f, a, m, b), tol, 48)
    }

    /// Simpson over (0, 1) pre-split on a bound-refined grid, so that narrow
    /// density spikes near either endpoint are always sampled.
    fn integrate_unit_oracle<F: Fn(f64) -> f64 + Copy>(f: F, tol: f64) -> f64 {
        let mut cuts = vec![1e-14];
        let mut e = 1e-13;
        while e < 0.1 {
            cuts.push(e);
            cuts.push(3.0 * e);
            e *= 10.0;
        }
        let mut x = 0.1;
        while x < 0.9 {
            cuts.push(x);
            x += 0.05;
        }
        let mirrored: Vec<f64> = cuts.iter().rev().map(|&c| 1.0 - c).collect();
        cuts.extend(mirrored);
        cuts.windows(2).map(|w| adaptive_simpson(f, w[0], w[1], tol)).sum()
    }

    #[test]
    fn transform_at_symmetry_point() {
        assert_relative_eq!(transform(0.5, shape(1.0)).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn transform_direct_value() {
        // ln(0.25 / 0.75)
        assert_relative_eq!(
            transform(0.5, shape(2.0)).unwrap(),
            (0.25f64 / 0.75).ln(),
            epsilon = 1e-14
        );
        assert_relative_eq!(transform(0.5, shape(2.0)).unwrap(), -1.0986122886681098, epsilon = 1e-12);
    }

    #[test]
    fn transform_rejects_bounds() {
        assert!(transform(0.0, shape(1.0)).is_err());
        assert!(transform(1.0, shape(2.3)).is_err());
        assert!(transform(-0.1, shape(1.0)).is_err());
    }

    #[test]
    fn inverse_transform_known_points() {
        assert_relative_eq!(inverse_transform(0.0, shape(1.0)), 0.5, epsilon = 1e-15);
        assert_relative_eq!(inverse_transform(-1.0986122886681098, shape(2.0)), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn transform_round_trip() {
        let s = shape(1.39);
        let y = transform(0.3, s).unwrap();
        assert_relative_eq!(inverse_transform(y, s), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn round_trip_over_grid() {
        for &nu in &[0.5, 1.0, 1.39, 2.0, 3.0] {
            let s = shape(nu);
            let mut x = 1e-6;
            while x < 1.0 {
                let y = transform(x, s).unwrap();
                let back = inverse_transform(y, s);
                assert!(
                    (back - x).abs() < 1e-10,
                    "round trip failed at x={x}, nu={nu}: {back}"
                );
                x += 0.0137;
            }
            // explicit near-bound points
            for &x in &[1e-6, 1e-4, 0.999, 1.0 - 1e-6] {
                let back = inverse_transform(transform(x, s).unwrap(), s);
                assert!((back - x).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn transform_strictly_increasing() {
        let s = shape(1.7);
        let mut prev = f64::NEG_INFINITY;
        for i in 1..999 {
            let y = transform(i as f64 / 1000.0, s).unwrap();
            assert!(y > prev);
            prev = y;
        }
    }

    #[test]
    fn density_direct_value() {
        // (1 / sqrt(2 pi)) * (1 / (0.5 * 0.5)) * 1
        let f = density(0.5, 0.0, 1.0, shape(1.0)).unwrap();
        assert_relative_eq!(f, 4.0 / (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-14);
        assert_relative_eq!(f, 1.5957691216057308, epsilon = 1e-12);
    }

    #[test]
    fn density_integrates_to_one() {
        let s = shape(1.39);
        let mass = adaptive_simpson(
            |x| density(x, 0.0, 0.11, s).unwrap(),
            1e-12,
            1.0 - 1e-12,
            1e-10,
        );
        assert!((mass - 1.0).abs() < 1e-6, "mass = {mass}");
    }

    #[test]
    fn density_integrates_to_one_over_parameter_grid() {
        for &mu in &[-3.0, 0.0, 3.0] {
            for &sigma2 in &[0.01, 0.3, 1.0] {
                for &nu in &[0.5, 1.39, 3.0] {
                    let s = shape(nu);
                    let mass =
                        integrate_unit_oracle(|x| density(x, mu, sigma2, s).unwrap(), 1e-10);
                    assert!(
                        (mass - 1.0).abs() < 1e-6,
                        "mass {mass} at mu={mu} sigma2={sigma2} nu={nu}"
                    );
                }
            }
        }
    }

    #[test]
    fn logit_symmetry_only_at_nu_one() {
        // at nu = 1: f(x; mu) = f(1 - x; -mu)
        let s1 = shape(1.0);
        let a = density(0.3, 0.7, 0.4, s1).unwrap();
        let b = density(0.7, -0.7, 0.4, s1).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-12);
        // broken for nu != 1
        let s = shape(1.4);
        let a = density(0.3, 0.7, 0.4, s).unwrap();
        let b = density(0.7, -0.7, 0.4, s).unwrap();
        assert!((a - b).abs() > 1e-3);
    }

    #[test]
    fn nu_one_matches_plain_logit_normal() {
        // direct transcription of the nu = 1 special case
        let mu = 0.4f64;
        let sigma2 = 0.3f64;
        for &x in &[0.05f64, 0.3, 0.5, 0.88] {
            let logit = (x / (1.0 - x)).ln();
            let z = (logit - mu) / sigma2.sqrt();
            let expected = (-0.5 * z * z).exp()
                / ((2.0 * std::f64::consts::PI * sigma2).sqrt() * x * (1.0 - x));
            assert_relative_eq!(density(x, mu, sigma2, shape(1.0)).unwrap(), expected, epsilon = 1e-13);
        }
    }

    #[test]
    fn nu_derivatives_match_finite_differences() {
        let h = 1e-5;
        let (x, nu) = (0.3, 1.4);
        let (u, v) = nu_derivatives(x, shape(nu)).unwrap();
        let u_fd = (transform(x, shape(nu + h)).unwrap() - transform(x, shape(nu - h)).unwrap())
            / (2.0 * h);
        assert!((u - u_fd).abs() / u_fd.abs() < 1e-6, "u={u} fd={u_fd}");
        let v_fd = (nu_derivatives(x, shape(nu + h)).unwrap().0
            - nu_derivatives(x, shape(nu - h)).unwrap().0)
            / (2.0 * h);
        assert!((v - v_fd).abs() / v_fd.abs() < 1e-6, "v={v} fd={v_fd}");
    }

    #[test]
    fn nu_derivatives_match_finite_differences_over_grid() {
        let h = 1e-5;
        for &x in &[0.01, 0.2, 0.5, 0.9, 0.995] {
            for &nu in &[0.5, 1.0, 1.39, 2.5] {
                let (u, v) = nu_derivatives(x, shape(nu)).unwrap();
                let u_fd = (transform(x, shape(nu + h)).unwrap()
                    - transform(x, shape(nu - h)).unwrap())
                    / (2.0 * h);
                let v_fd = (nu_derivatives(x, shape(nu + h)).unwrap().0
                    - nu_derivatives(x, shape(nu - h)).unwrap().0)
                    / (2.0 * h);
                assert!((u - u_fd).abs() <= 1e-6 * u_fd.abs().max(1.0));
                assert!((v - v_fd).abs() <= 1e-6 * v_fd.abs().max(1.0));
            }
        }
    }

    #[test]
    fn nu_derivatives_bounded_for_small_nu() {
        let x = (-1.0f64).exp();
        let mut nu = 1e-3;
        while nu <= 2.0 {
            let (u, v) = nu_derivatives(x, shape(nu)).unwrap();
            assert!(u.is_finite() && v.is_finite(), "blow-up at nu={nu}");
            nu += 0.05;
        }
    }

    #[test]
    fn predictive_cdf_median_and_bounds() {
        let pred = GlnPredictive::new(-0.3, 0.4, 1.4).unwrap();
        let x_med = inverse_transform(-0.3, shape(1.4));
        assert_relative_eq!(pred.cdf(x_med).unwrap(), 0.5, epsilon = 1e-12);
        assert_eq!(pred.cdf(0.0).unwrap(), 0.0);
        assert_eq!(pred.cdf(1.0).unwrap(), 1.0);
        assert!(pred.cdf(1.2).is_err());
    }

    #[test]
    fn predictive_cdf_matches_monte_carlo() {
        let pred = GlnPredictive::new(0.2, 0.5, 1.39).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let n = 50_000;
        let mut draws: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                inverse_transform_raw(pred.mu + pred.sigma2.sqrt() * z, pred.nu)
            })
            .collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut sup = 0.0f64;
        for i in 1..100 {
            let x = i as f64 / 100.0;
            let emp = draws.partition_point(|&d| d <= x) as f64 / n as f64;
            sup = sup.max((emp - pred.cdf(x).unwrap()).abs());
        }
        assert!(sup < 0.01, "sup deviation {sup}");
    }

    #[test]
    fn predictive_quantile_median_and_monotone() {
        let pred = GlnPredictive::new(0.1, 0.3, 1.2).unwrap();
        assert_relative_eq!(pred.quantile(0.5).unwrap(), pred.median(), epsilon = 1e-14);
        let mut prev = 0.0;
        for i in 1..100 {
            let q = pred.quantile(i as f64 / 100.0).unwrap();
            assert!(q > prev, "quantile not monotone at tau={}", i as f64 / 100.0);
            prev = q;
        }
        assert!(pred.quantile(0.0).is_err());
        assert!(pred.quantile(1.0).is_err());
    }

    #[test]
    fn predictive_quantile_cdf_round_trip() {
        let pred = GlnPredictive::new(-0.4, 0.2, 1.7).unwrap();
        for &tau in &[0.025, 0.25, 0.5, 0.75, 0.975] {
            let q = pred.quantile(tau).unwrap();
            assert_relative_eq!(pred.cdf(q).unwrap(), tau, epsilon = 1e-9);
        }
    }

    #[test]
    fn predictive_point_median_rules() {
        let pred = GlnPredictive::new(0.0, 0.2, 1.0).unwrap();
        assert_relative_eq!(pred.point(PointRule::Median, 0.0), 0.5, epsilon = 1e-12);
        // median far below delta reports zero
        let low = GlnPredictive::new(-9.0, 0.05, 1.0).unwrap();
        assert!(low.median() < 0.005);
        assert_eq!(low.point(PointRule::Median, 0.005), 0.0);
        // and the mirrored clip reports one
        let high = GlnPredictive::new(9.0, 0.05, 1.0).unwrap();
        assert_eq!(high.point(PointRule::Median, 0.005), 1.0);
    }

    #[test]
    fn predictive_mean_matches_monte_carlo() {
        let pred = GlnPredictive::new(0.3, 0.6, 1.4).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let n = 50_000;
        let mc: f64 = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                inverse_transform_raw(pred.mu + pred.sigma2.sqrt() * z, pred.nu)
            })
            .sum::<f64>()
            / n as f64;
        let mean = pred.mean();
        assert!((mean - mc).abs() < 1e-3, "quadrature {mean} vs monte carlo {mc}");
        assert!(mean > 0.0 && mean < 1.0);
    }

    #[test]
    fn predictive_mean_matches_simpson() {
        let pred = GlnPredictive::new(-0.8, 0.9, 2.2).unwrap();
        let s = shape(pred.nu);
        let oracle = adaptive_simpson(
            |x| x * density(x, pred.mu, pred.sigma2, s).unwrap(),
            1e-14,
            1.0 - 1e-14,
            1e-12,
        );
        assert!((pred.mean() - oracle).abs() < 1e-8);
    }

    #[test]
    fn theta_state_validation() {
        assert!(ThetaState::new(vec![], 0.1, 1.0).is_err());
        assert!(ThetaState::new(vec![0.5], -0.1, 1.0).is_err());
        assert!(ThetaState::new(vec![0.5], 0.1, 0.0).is_err());
        let theta = ThetaState::new(vec![1.36, -0.37], 0.11, 1.4).unwrap();
        assert_eq!(theta.order(), 2);
    }
}
