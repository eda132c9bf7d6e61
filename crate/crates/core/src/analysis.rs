//! Regression fits, trend tests, correlation and confidence intervals used to
//! judge the simulated scaling behaviour.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

use crate::expansion::ExpansionModel;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("series lengths differ: {0} x values, {1} y values")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("x values must be strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("value at index {0} must be positive")]
    NonPositive(usize),
    #[error("design matrix is singular")]
    Degenerate,
    #[error("data has zero variance")]
    ZeroVariance,
}

/// Paired observations `(x_i, y_i)` with strictly increasing `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Series {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, AnalysisError> {
        if x.len() != y.len() {
            return Err(AnalysisError::LengthMismatch(x.len(), y.len()));
        }
        if x.len() < 2 {
            return Err(AnalysisError::TooShort { needed: 2, got: x.len() });
        }
        if let Some(i) = x.iter().chain(&y).position(|v| !v.is_finite()) {
            return Err(AnalysisError::NonFinite(i % x.len()));
        }
        if let Some(i) = x.windows(2).position(|w| w[1] <= w[0]) {
            return Err(AnalysisError::NotIncreasing(i + 1));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitKind {
    /// `y = c0 * x^c1`, fitted on logarithms.
    PowerLaw,
    /// `y = c0 + c1 / sqrt(x)`.
    InverseSqrt,
    /// `y = c0 + c1 * sqrt(x) + c2 / sqrt(x)`.
    SqrtPair,
    /// `y = c0 + c1 / x`.
    Reciprocal,
    /// `y = c0 + c1 * x + c2 * x^2`.
    Quadratic,
}

impl std::fmt::Display for FitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FitKind::PowerLaw => "power-law",
            FitKind::InverseSqrt => "inverse-sqrt",
            FitKind::SqrtPair => "sqrt-pair",
            FitKind::Reciprocal => "reciprocal",
            FitKind::Quadratic => "quadratic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kind: FitKind,
    pub coefficients: Vec<f64>,
    /// Coefficient of determination on the fitted scale.
    pub r_squared: f64,
}

impl FitResult {
    pub fn predict(&self, x: f64) -> f64 {
        let c = &self.coefficients;
        match self.kind {
            FitKind::PowerLaw => c[0] * x.powf(c[1]),
            FitKind::InverseSqrt => c[0] + c[1] / x.sqrt(),
            FitKind::SqrtPair => c[0] + c[1] * x.sqrt() + c[2] / x.sqrt(),
            FitKind::Reciprocal => c[0] + c[1] / x,
            FitKind::Quadratic => c[0] + c[1] * x + c[2] * x * x,
        }
    }
}

/// Ordinary least squares through the normal equations, solved by Gaussian
/// elimination with partial pivoting. Returns coefficients and R².
fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, f64), AnalysisError> {
    let p = rows[0].len();
    if rows.len() < p {
        return Err(AnalysisError::TooShort { needed: p, got: rows.len() });
    }
    let mut m = vec![vec![0.0; p + 1]; p];
    for (row, &yi) in rows.iter().zip(y) {
        for i in 0..p {
            for j in 0..p {
                m[i][j] += row[i] * row[j];
            }
            m[i][p] += row[i] * yi;
        }
    }
    let scale = m.iter().map(|r| r[..p].iter().fold(0.0f64, |a, v| a.max(v.abs()))).fold(0.0, f64::max);
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .expect("non-empty");
        if m[pivot][col].abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(AnalysisError::Degenerate);
        }
        m.swap(col, pivot);
        for r in 0..p {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..=p {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    let coef: Vec<f64> = (0..p).map(|i| m[i][p] / m[i][i]).collect();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (row, &yi) in rows.iter().zip(y) {
        let fit: f64 = row.iter().zip(&coef).map(|(a, b)| a * b).sum();
        ss_res += (yi - fit).powi(2);
        ss_tot += (yi - mean).powi(2);
    }
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= 1e-24 {
        1.0
    } else {
        0.0
    };
    Ok((coef, r2))
}

fn require_positive(v: &[f64]) -> Result<(), AnalysisError> {
    match v.iter().position(|&a| a <= 0.0) {
        Some(i) => Err(AnalysisError::NonPositive(i)),
        None => Ok(()),
    }
}

fn linear_fit(
    kind: FitKind,
    s: &Series,
    basis: impl Fn(f64) -> Vec<f64>,
) -> Result<FitResult, AnalysisError> {
    let rows: Vec<Vec<f64>> = s.x.iter().map(|&x| basis(x)).collect();
    let (coefficients, r_squared) = least_squares(&rows, &s.y)?;
    Ok(FitResult {
        kind,
        coefficients,
        r_squared,
    })
}

/// `y = alpha * x^beta` by least squares on `ln y = ln alpha + beta ln x`.
/// Coefficients are `[alpha, beta]`; R² is on the log scale.
pub fn power_law_fit(s: &Series) -> Result<FitResult, AnalysisError> {
    require_positive(&s.x)?;
    require_positive(&s.y)?;
    let rows: Vec<Vec<f64>> = s.x.iter().map(|&x| vec![1.0, x.ln()]).collect();
    let ly: Vec<f64> = s.y.iter().map(|y| y.ln()).collect();
    let (c, r_squared) = least_squares(&rows, &ly)?;
    Ok(FitResult {
        kind: FitKind::PowerLaw,
        coefficients: vec![c[0].exp(), c[1]],
        r_squared,
    })
}

/// `y = a + b / sqrt(x)`.
pub fn inverse_sqrt_fit(s: &Series) -> Result<FitResult, AnalysisError> {
    require_positive(&s.x)?;
    linear_fit(FitKind::InverseSqrt, s, |x| vec![1.0, 1.0 / x.sqrt()])
}

/// Expansion-factor curves: `c0 + c1 sqrt(rho) + c2 / sqrt(rho)` for random
/// expansion, `c0 + c1 / rho` for gradual expansion.
pub fn rho_curve_fit(s: &Series, model: ExpansionModel) -> Result<FitResult, AnalysisError> {
    if let Some(i) = s.x.iter().position(|&r| r < 1.0) {
        return Err(AnalysisError::NonPositive(i));
    }
    match model {
        ExpansionModel::Random => {
            linear_fit(FitKind::SqrtPair, s, |r| vec![1.0, r.sqrt(), 1.0 / r.sqrt()])
        }
        ExpansionModel::Gradual => linear_fit(FitKind::Reciprocal, s, |r| vec![1.0, 1.0 / r]),
    }
}

/// `y = c0 + c1 x + c2 x^2`.
pub fn quadratic_fit(s: &Series) -> Result<FitResult, AnalysisError> {
    linear_fit(FitKind::Quadratic, s, |x| vec![1.0, x, x * x])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    Increasing,
    Decreasing,
    None,
}

impl std::fmt::Display for Trend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Trend::Increasing => "increasing",
            Trend::Decreasing => "decreasing",
            Trend::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannKendall {
    pub s: i64,
    pub variance: f64,
    pub z: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    /// Trend at the 5% level.
    pub trend: Trend,
}

impl MannKendall {
    /// One-sided p-value against the alternative of an increasing trend.
    pub fn p_increasing(&self) -> f64 {
        1.0 - std_normal().cdf(self.z)
    }

    /// One-sided p-value against the alternative of a decreasing trend.
    pub fn p_decreasing(&self) -> f64 {
        std_normal().cdf(self.z)
    }
}

fn std_normal() -> Normal {
    Normal::standard()
}

pub const MK_ALPHA: f64 = 0.05;

/// Mann-Kendall trend test with tie-corrected variance and a continuity-corrected
/// normal approximation.
pub fn mann_kendall(y: &[f64]) -> Result<MannKendall, AnalysisError> {
    let n = y.len();
    if n < 4 {
        return Err(AnalysisError::TooShort { needed: 4, got: n });
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite(i));
    }
    let mut s = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            s += match y[j].partial_cmp(&y[i]).expect("finite") {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => -1,
                std::cmp::Ordering::Equal => 0,
            };
        }
    }
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        ties += t * (t - 1.0) * (2.0 * t + 5.0);
        i = j + 1;
    }
    let nf = n as f64;
    let variance = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - ties) / 18.0;
    let z = if variance <= 0.0 || s == 0 {
        0.0
    } else if s > 0 {
        (s as f64 - 1.0) / variance.sqrt()
    } else {
        (s as f64 + 1.0) / variance.sqrt()
    };
    let p_value = (2.0 * (1.0 - std_normal().cdf(z.abs()))).min(1.0);
    let trend = if p_value < MK_ALPHA {
        if z > 0.0 {
            Trend::Increasing
        } else {
            Trend::Decreasing
        }
    } else {
        Trend::None
    };
    Ok(MannKendall {
        s,
        variance,
        z,
        p_value,
        trend,
    })
}

/// Product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(AnalysisError::TooShort { needed: 2, got: x.len() });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(AnalysisError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub half_width: f64,
}

impl Interval {
    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower() <= v && v <= self.upper()
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lower() <= other.upper() && other.lower() <= self.upper()
    }
}

/// Upper `p` quantile of Student's t with `df` degrees of freedom.
pub fn t_quantile(p: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .expect("positive degrees of freedom")
        .inverse_cdf(p)
}

/// Two-sided 90% Student-t interval for the mean.
pub fn confidence_interval_90(samples: &[f64]) -> Result<Interval, AnalysisError> {
    let n = samples.len();
    if n < 2 {
        return Err(AnalysisError::TooShort { needed: 2, got: n });
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let half_width = t_quantile(0.95, nf - 1.0) * (var / nf).sqrt();
    Ok(Interval { mean, half_width })
}

/// First `x` where the piecewise-linear curve through the points reaches
/// `level` from above, interpolated between grid points.
pub fn first_crossing(x: &[f64], y: &[f64], level: f64) -> Option<f64> {
    if y.first().is_some_and(|&v| v <= level) {
        return x.first().copied();
    }
    for i in 1..x.len().min(y.len()) {
        let (y0, y1) = (y[i - 1], y[i]);
        if y0 > level && y1 <= level {
            let f = (y0 - level) / (y0 - y1);
            return Some(x[i - 1] + f * (x[i] - x[i - 1]));
        }
    }
    None
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn series(x: Vec<f64>, mut f: impl FnMut(f64) -> f64) -> Series {
        let y = x.iter().map(|&v| f(v)).collect();
        Series::new(x, y).unwrap()
    }

    fn grid(from: f64, to: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| from + (to - from) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn series_guards() {
        assert!(Series::new(vec![1.0], vec![1.0]).is_err());
        assert!(Series::new(vec![1.0, 2.0], vec![1.0]).is_err());
        assert_eq!(
            Series::new(vec![1.0, 1.0], vec![1.0, 2.0]),
            Err(AnalysisError::NotIncreasing(1))
        );
    }

    #[test]
    fn power_law() {
        let f = power_law_fit(&series(grid(1.0, 50.0, 20), |x| 2.0 * x.sqrt())).unwrap();
        assert!((f.coefficients[0] - 2.0).abs() < 1e-9);
        assert!((f.coefficients[1] - 0.5).abs() < 1e-9);
        assert!((f.r_squared - 1.0).abs() < 1e-9);
        let f = power_law_fit(&series(grid(1.0, 50.0, 20), |x| 3.0 * x)).unwrap();
        assert!((f.coefficients[1] - 1.0).abs() < 1e-9);
        let mut rng = crate::rng::seeded(11);
        let noisy = series(grid(1.0, 200.0, 60), |x| {
            let e: f64 = rng.gen::<f64>() - 0.5;
            x.sqrt() * (1.0 + 0.02 * e)
        });
        let b = power_law_fit(&noisy).unwrap().coefficients[1];
        assert!((0.45..=0.55).contains(&b));
        assert!(power_law_fit(&series(vec![1.0, 2.0, 3.0], |x| x - 2.0)).is_err());
    }

    #[test]
    fn inverse_sqrt() {
        let f = inverse_sqrt_fit(&series(grid(3.0, 60.0, 30), |x| 68.0 + 2790.0 / x.sqrt())).unwrap();
        assert!((f.coefficients[0] - 68.0).abs() < 1e-6);
        assert!((f.coefficients[1] - 2790.0).abs() < 1e-6);
        assert!((f.r_squared - 1.0).abs() < 1e-9);
        let f = inverse_sqrt_fit(&series(grid(3.0, 60.0, 10), |_| 5.0)).unwrap();
        assert!(f.coefficients[1].abs() < 1e-9);
        let f = inverse_sqrt_fit(&series(vec![4.0, 9.0], |x| 1.0 + x)).unwrap();
        for (x, y) in [(4.0, 5.0), (9.0, 10.0)] {
            assert!((f.predict(x) - y).abs() < 1e-9);
        }
    }

    #[test]
    fn rho_forms() {
        let rho = grid(1.0, 4.0, 13);
        let f = rho_curve_fit(&series(rho.clone(), |r| 0.2 - 0.2 / r), ExpansionModel::Gradual).unwrap();
        assert!((f.coefficients[0] - 0.2).abs() < 1e-9 && (f.coefficients[1] + 0.2).abs() < 1e-9);
        let f = rho_curve_fit(&series(rho.clone(), |r| (r - 1.0) / r.sqrt()), ExpansionModel::Random).unwrap();
        for (c, want) in f.coefficients.iter().zip([0.0, 1.0, -1.0]) {
            assert!((c - want).abs() < 1e-7, "{:?}", f.coefficients);
        }
        let f = rho_curve_fit(&series(rho, |_| 0.3), ExpansionModel::Random).unwrap();
        assert!(f.coefficients[1].abs() < 1e-7 && f.coefficients[2].abs() < 1e-7);
        let q = quadratic_fit(&series(grid(1.0, 4.0, 13), |x| 1.0 + 2.0 * x - 0.5 * x * x)).unwrap();
        assert!((q.coefficients[2] + 0.5).abs() < 1e-9);
    }

    fn brute_s(y: &[f64]) -> i64 {
        let mut s = 0;
        for i in 0..y.len() {
            for j in (i + 1)..y.len() {
                s += (y[j] - y[i]).signum() as i64 * (y[j] != y[i]) as i64;
            }
        }
        s
    }

    #[test]
    fn mann_kendall_cases() {
        let inc: Vec<f64> = (0..12).map(f64::from).collect();
        let mk = mann_kendall(&inc).unwrap();
        assert_eq!(mk.s, 66);
        assert_eq!(mk.trend, Trend::Increasing);
        let flat = vec![2.0; 10];
        let mk = mann_kendall(&flat).unwrap();
        assert_eq!(mk.s, 0);
        assert_eq!(mk.trend, Trend::None);
        let y = [10.0, 12.0, 11.0, 11.0, 15.0, 9.0, 14.0, 13.0, 13.0, 16.0];
        let mk = mann_kendall(&y).unwrap();
        assert_eq!(mk.s, brute_s(&y));
        // two tie groups of size 2: var = (10*9*25 - 2*2*1*9) / 18 = 123
        assert!((mk.variance - 123.0).abs() < 1e-12);
        assert!(mann_kendall(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn correlation() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&x, &[3.0, 5.0, 7.0, 9.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&x, &[-1.0, -2.0, -3.0, -4.0]).unwrap() + 1.0).abs() < 1e-12);
        // sxy = 5.5, sxx = 5, syy = 8.75
        let r = pearson(&x, &[1.0, 3.0, 2.0, 5.0]).unwrap();
        assert!((r - 5.5 / (5.0f64 * 8.75).sqrt()).abs() < 1e-12);
        assert_eq!(pearson(&x, &[1.0; 4]), Err(AnalysisError::ZeroVariance));
    }

    #[test]
    fn intervals() {
        assert!((t_quantile(0.95, 1.0) - 6.313751514675).abs() < 1e-6);
        assert!((t_quantile(0.95, 19.0) - 1.729132812).abs() < 1e-6);
        let ci = confidence_interval_90(&[3.0; 5]).unwrap();
        assert_eq!(ci.half_width, 0.0);
        let ci = confidence_interval_90(&[0.0, 1.0]).unwrap();
        assert_eq!(ci.mean, 0.5);
        assert!((ci.half_width - 6.313751514675 * 0.5).abs() < 1e-6);
        assert!(confidence_interval_90(&[1.0]).is_err());
    }

    #[test]
    fn crossings() {
        let x = [1.0, 1.5, 2.0, 2.5];
        assert_eq!(first_crossing(&x, &[1.0, 0.5, -0.5, -1.0], 0.0), Some(1.75));
        assert_eq!(first_crossing(&x, &[1.0, 0.5, 0.2, 0.1], 0.0), None);
    }
}
