//! Fit-quality and accuracy statistics. Angles are radians throughout.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Result, SmolError};

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Sum of squared errors, total sum of squares and R².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitQuality {
    pub sse: f64,
    pub tss: f64,
    pub r2: f64,
}

pub fn sse_tss_r2(data: &[f64], fit: &[f64]) -> Result<FitQuality> {
    if data.len() != fit.len() {
        return Err(SmolError::LengthMismatch(format!(
            "data {} vs fit {}",
            data.len(),
            fit.len()
        )));
    }
    if data.len() < 2 {
        return Err(SmolError::Empty(
            "fit-quality input needs at least two points",
        ));
    }
    let mean = data.iter().sum::<f64>() / data.len() as f64;
    let sse: f64 = data.iter().zip(fit).map(|(d, f)| (d - f).powi(2)).sum();
    let tss: f64 = data.iter().map(|d| (d - mean).powi(2)).sum();
    if tss == 0.0 {
        return Err(SmolError::UndefinedR2);
    }
    Ok(FitQuality {
        sse,
        tss,
        r2: 1.0 - sse / tss,
    })
}

fn check_shapes(measured: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<usize> {
    if measured.len() != truth.len() {
        return Err(SmolError::LengthMismatch(format!(
            "{} measured datasets vs {} truth datasets",
            measured.len(),
            truth.len()
        )));
    }
    let mut count = 0;
    for (j, (m, t)) in measured.iter().zip(truth).enumerate() {
        if m.len() != t.len() {
            return Err(SmolError::LengthMismatch(format!(
                "dataset {j}: {} vs {}",
                m.len(),
                t.len()
            )));
        }
        count += m.len();
    }
    if count == 0 {
        return Err(SmolError::Empty("accuracy input"));
    }
    Ok(count)
}

/// Mean absolute error over `n` datasets of `k` values each.
pub fn mae(measured: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    mae_diff(measured, truth, 0.0)
}

/// MAE after shifting the truth by the reference dataset mean.
pub fn mae_diff(measured: &[Vec<f64>], truth: &[Vec<f64>], reference_mean: f64) -> Result<f64> {
    let count = check_shapes(measured, truth)?;
    let sum: f64 = measured
        .iter()
        .zip(truth)
        .flat_map(|(m, t)| m.iter().zip(t))
        .map(|(d, f)| (d - (f + reference_mean)).abs())
        .sum();
    Ok(sum / count as f64)
}

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(SmolError::Empty("mean of no values"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Pooled deviation from each dataset's own mean, with `kn − 1` degrees of freedom.
pub fn stddev(datasets: &[Vec<f64>]) -> Result<f64> {
    let count: usize = datasets.iter().map(Vec::len).sum();
    if count < 2 {
        return Err(SmolError::Empty(
            "standard deviation needs at least two values",
        ));
    }
    let mut ss = 0.0;
    for d in datasets.iter().filter(|d| !d.is_empty()) {
        let m = d.iter().sum::<f64>() / d.len() as f64;
        ss += d.iter().map(|v| (m - v).powi(2)).sum::<f64>();
    }
    Ok((ss / (count - 1) as f64).sqrt())
}

fn resultant<'a>(angles: impl IntoIterator<Item = &'a f64>) -> (f64, f64, usize) {
    let (mut c, mut s, mut n) = (0.0, 0.0, 0);
    for a in angles {
        c += a.cos();
        s += a.sin();
        n += 1;
    }
    (c, s, n)
}

/// Direction of the resultant vector, in (−π, π].
pub fn circ_mean(angles: &[f64]) -> Result<f64> {
    if angles.is_empty() {
        return Err(SmolError::Empty("circular mean of no angles"));
    }
    let (c, s, n) = resultant(angles);
    if (c * c + s * s).sqrt() <= 1e-12 * n as f64 {
        return Err(SmolError::UndefinedCircularMean);
    }
    Ok(s.atan2(c))
}

/// Circular standard deviation `sqrt(−2 ln R̄)` with R̄ the resultant length
/// divided by the sample count, each dataset centred on its own circular mean.
pub fn circ_std(datasets: &[Vec<f64>]) -> Result<f64> {
    let mut c = 0.0;
    let mut s = 0.0;
    let mut n = 0usize;
    for d in datasets.iter().filter(|d| !d.is_empty()) {
        let m = circ_mean(d)?;
        for a in d {
            let (si, ci) = (m - a).sin_cos();
            c += ci;
            s += si;
            n += 1;
        }
    }
    if n == 0 {
        return Err(SmolError::Empty("circular deviation of no angles"));
    }
    let r = ((c * c + s * s).sqrt() / n as f64).min(1.0);
    Ok((-2.0 * r.ln()).max(0.0).sqrt())
}

/// Differential circular MAE: direction of the resultant of the wrapped absolute errors.
pub fn circ_mae_diff(
    measured: &[Vec<f64>],
    truth: &[Vec<f64>],
    reference_mean: f64,
) -> Result<f64> {
    check_shapes(measured, truth)?;
    let errs: Vec<f64> = measured
        .iter()
        .zip(truth)
        .flat_map(|(m, t)| m.iter().zip(t))
        .map(|(d, f)| wrap_angle(d - (f + reference_mean)).abs())
        .collect();
    circ_mean(&errs)
}

/// Least-squares line `y = slope·x + intercept` with its R².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

impl LinearFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(SmolError::LengthMismatch(format!(
            "x {} vs y {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(SmolError::Empty("linear fit needs at least two points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(SmolError::InsufficientSpan("all abscissae equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let fit: Vec<f64> = x.iter().map(|v| slope * v + intercept).collect();
    let r2 = match sse_tss_r2(y, &fit) {
        Ok(q) => q.r2,
        Err(SmolError::UndefinedR2) => 1.0,
        Err(e) => return Err(e),
    };
    Ok(LinearFit {
        slope,
        intercept,
        r2,
    })
}

/// Accuracy of one axis of a sweep (mm for translations, degrees for rotations).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisAccuracy {
    pub axis: String,
    pub mae: f64,
    pub sigma: f64,
    pub trend_r2: Option<f64>,
    pub points: usize,
    pub repeats: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub axes: Vec<AxisAccuracy>,
}

impl AccuracyReport {
    /// Mean σ over the x, y and z translation axes, if all three are present.
    pub fn sigma_xyz(&self) -> Option<f64> {
        let s: Vec<f64> = ["x", "y", "z"]
            .iter()
            .filter_map(|a| self.axes.iter().find(|r| r.axis == *a).map(|r| r.sigma))
            .collect();
        (s.len() == 3).then(|| s.iter().sum::<f64>() / 3.0)
    }

    pub fn axis(&self, name: &str) -> Option<&AxisAccuracy> {
        self.axes.iter().find(|a| a.axis == name)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["axis", "mae", "sigma", "trend_r2", "points", "repeats"])?;
        for a in &self.axes {
            wr.write_record([
                a.axis.clone(),
                format!("{:e}", a.mae),
                format!("{:e}", a.sigma),
                a.trend_r2.map(|v| format!("{v:e}")).unwrap_or_default(),
                a.points.to_string(),
                a.repeats.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn r2_examples() {
        let q = sse_tss_r2(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert_eq!((q.sse, q.tss, q.r2), (1.0, 2.0, 0.5));
        let q = sse_tss_r2(&[1.0, 5.0], &[1.0, 5.0]).unwrap();
        assert_eq!((q.sse, q.r2), (0.0, 1.0));
        let q = sse_tss_r2(&[1.0, 5.0, 3.0], &[3.0, 3.0, 3.0]).unwrap();
        assert_eq!(q.r2, 0.0);
        assert_eq!(
            sse_tss_r2(&[2.0, 2.0], &[2.0, 1.0]),
            Err(SmolError::UndefinedR2)
        );
        assert!(sse_tss_r2(&[2.0], &[2.0]).is_err());
    }

    #[test]
    fn mae_examples() {
        let m = vec![vec![1.0, 3.0]];
        let t = vec![vec![0.0, 0.0]];
        assert_eq!(mae(&m, &t).unwrap(), 2.0);
        assert_eq!(mae(&t, &t).unwrap(), 0.0);
        let shifted = vec![vec![0.7, 1.7], vec![2.7]];
        let truth = vec![vec![0.0, 1.0], vec![2.0]];
        assert!(mae_diff(&shifted, &truth, 0.7).unwrap() < 1e-15);
        assert!(mae(&[vec![]], &[vec![]]).is_err());
        assert!(mae(&m, &[vec![0.0]]).is_err());
    }

    #[test]
    fn stddev_examples() {
        assert_eq!(stddev(&[vec![4.0, 4.0, 4.0]]).unwrap(), 0.0);
        assert_relative_eq!(
            stddev(&[vec![0.0, 2.0]]).unwrap(),
            2f64.sqrt(),
            max_relative = 1e-15
        );
        let a = stddev(&[vec![0.0, 2.0], vec![5.0, 6.0]]).unwrap();
        let b = stddev(&[vec![0.0, 2.0], vec![105.0, 106.0]]).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn circular_examples() {
        let d = |x: f64| x.to_radians();
        assert!(circ_mean(&[d(359.0), d(1.0)]).unwrap().abs() < 1e-12);
        assert_relative_eq!(
            circ_mean(&[0.0, d(90.0)]).unwrap(),
            d(45.0),
            max_relative = 1e-12
        );
        assert_eq!(circ_std(&[vec![0.3, 0.3, 0.3]]).unwrap(), 0.0);
        // about the mean of 45° the two deviations are ±45°, so R̄ = cos 45°
        let expected = (-2.0 * d(45.0).cos().ln()).sqrt();
        assert_relative_eq!(
            circ_std(&[vec![0.0, d(90.0)]]).unwrap(),
            expected,
            max_relative = 1e-12
        );
        assert_eq!(circ_mean(&[0.0, PI]), Err(SmolError::UndefinedCircularMean));
        let m = vec![vec![d(10.0), d(350.0)]];
        let t = vec![vec![0.0, 0.0]];
        assert_relative_eq!(
            circ_mae_diff(&m, &t, 0.0).unwrap(),
            d(10.0),
            max_relative = 1e-12
        );
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_relative_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        assert_relative_eq!(wrap_angle(0.1 + 4.0 * TAU), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn linear_fit_exact_line() {
        let x = [0.0, 5.0, 10.0, 15.0];
        let y: Vec<f64> = x.iter().map(|v| 0.02 * v + 0.1).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert_relative_eq!(f.slope, 0.02, max_relative = 1e-12);
        assert_relative_eq!(f.intercept, 0.1, max_relative = 1e-12);
        assert_relative_eq!(f.r2, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn report_export() {
        let r = AccuracyReport {
            axes: ["x", "y", "z"]
                .iter()
                .enumerate()
                .map(|(i, a)| AxisAccuracy {
                    axis: a.to_string(),
                    mae: 0.1,
                    sigma: i as f64,
                    trend_r2: None,
                    points: 11,
                    repeats: 20,
                })
                .collect(),
        };
        assert_eq!(r.sigma_xyz(), Some(1.0));
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        let back: AccuracyReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }

    proptest! {
        #[test]
        fn circ_mean_shift_equivariant(
            angles in proptest::collection::vec(-0.8f64..0.8, 2..20),
            c in -10.0f64..10.0,
        ) {
            let m0 = circ_mean(&angles).unwrap();
            let shifted: Vec<f64> = angles.iter().map(|a| a + c).collect();
            let m1 = circ_mean(&shifted).unwrap();
            prop_assert!(wrap_angle(m1 - m0 - c).abs() < 1e-10);
        }

        #[test]
        fn circ_std_matches_linear_for_small_spread(
            angles in proptest::collection::vec(-0.04f64..0.04, 5..40),
        ) {
            let lin = stddev(std::slice::from_ref(&angles)).unwrap();
            prop_assume!(lin > 1e-4);
            let circ = circ_std(std::slice::from_ref(&angles)).unwrap();
            // circular form divides by n, linear by n − 1
            let n = angles.len() as f64;
            let lin_n = lin * ((n - 1.0) / n).sqrt();
            prop_assert!((circ - lin_n).abs() <= 0.01 * lin_n);
        }

        #[test]
        fn mae_diff_zero_reference_is_mae(v in proptest::collection::vec(-5.0f64..5.0, 1..20)) {
            let t: Vec<f64> = v.iter().map(|x| x * 0.3).collect();
            prop_assert_eq!(mae_diff(std::slice::from_ref(&v), std::slice::from_ref(&t), 0.0).unwrap(), mae(&[v], &[t]).unwrap());
        }

        #[test]
        fn r2_affine_invariant(
            d in proptest::collection::vec(-5.0f64..5.0, 3..20),
            a in 0.1f64..10.0,
            b in -10.0f64..10.0,
        ) {
            let f: Vec<f64> = d.iter().enumerate().map(|(i, x)| x + 0.1 * (i as f64).sin()).collect();
            let r0 = match sse_tss_r2(&d, &f) { Ok(q) => q.r2, Err(_) => return Ok(()) };
            let d2: Vec<f64> = d.iter().map(|x| a * x + b).collect();
            let f2: Vec<f64> = f.iter().map(|x| a * x + b).collect();
            let r1 = sse_tss_r2(&d2, &f2).unwrap().r2;
            prop_assert!((r0 - r1).abs() < 1e-9 * (1.0 + r0.abs()));
        }
    }
}
