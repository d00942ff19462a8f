//! Bjøntegaard-delta statistics over rate-quality curves.
//!
//! Curves are fitted in the log10-bitrate domain, either with a monotone
//! piecewise-cubic Hermite interpolant (Fritsch–Carlson slopes, the default)
//! or with the classic least-squares cubic polynomial. The delta is the mean
//! vertical gap between the two fits over their overlapping interval.

use std::fmt;
use std::io::Read;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RqPoint {
    pub bitrate_kbps: f64,
    pub quality: f64,
}

impl RqPoint {
    pub fn new(bitrate_kbps: f64, quality: f64) -> Self {
        RqPoint {
            bitrate_kbps,
            quality,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RqCurve {
    pub label: String,
    pub metric_id: String,
    pub points: Vec<RqPoint>,
}

impl RqCurve {
    /// Validates and sorts the points by bitrate.
    pub fn new(label: impl Into<String>, metric_id: impl Into<String>, mut points: Vec<RqPoint>) -> Result<Self> {
        let label = label.into();
        if points.len() < 2 {
            return Err(Error::Curve(format!(
                "curve `{label}` needs at least 2 points, got {}",
                points.len()
            )));
        }
        for p in &points {
            if !(p.bitrate_kbps > 0.0 && p.bitrate_kbps.is_finite()) {
                return Err(Error::Curve(format!(
                    "curve `{label}`: bitrate must be positive and finite, got {}",
                    p.bitrate_kbps
                )));
            }
            if !p.quality.is_finite() {
                return Err(Error::Curve(format!("curve `{label}`: quality {} is not finite", p.quality)));
            }
        }
        points.sort_by(|a, b| a.bitrate_kbps.total_cmp(&b.bitrate_kbps));
        if points.windows(2).any(|w| w[0].bitrate_kbps == w[1].bitrate_kbps) {
            return Err(Error::Curve(format!("curve `{label}` has duplicate bitrates")));
        }
        Ok(RqCurve {
            label,
            metric_id: metric_id.into(),
            points,
        })
    }

    pub fn from_pairs(label: &str, metric_id: &str, pairs: &[(f64, f64)]) -> Result<Self> {
        RqCurve::new(label, metric_id, pairs.iter().map(|&(r, q)| RqPoint::new(r, q)).collect())
    }

    /// Reads `bitrate_kbps,quality` CSV (header required).
    pub fn from_csv_reader<R: Read>(label: &str, metric_id: &str, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Parse(format!("CSV lacks `{name}` column")))
        };
        let rate_col = col("bitrate_kbps")?;
        let quality_col = col("quality")?;
        let mut points = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let field = |c: usize| -> Result<f64> {
                rec.get(c)
                    .ok_or_else(|| Error::Parse(format!("row {}: missing column", i + 2)))?
                    .parse()
                    .map_err(|_| Error::Parse(format!("row {}: not a number", i + 2)))
            };
            points.push(RqPoint::new(field(rate_col)?, field(quality_col)?));
        }
        RqCurve::new(label, metric_id, points)
    }

    pub fn from_csv_path(label: &str, metric_id: &str, path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        RqCurve::from_csv_reader(label, metric_id, f)
    }

    fn log_rates(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.bitrate_kbps.log10()).collect()
    }

    fn qualities(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.quality).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Monotone piecewise-cubic Hermite.
    #[default]
    Pchip,
    /// Least-squares cubic polynomial (degree lowered for fewer points).
    CubicPolynomial,
}

impl fmt::Display for Interpolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Interpolation::Pchip => f.write_str("pchip"),
            Interpolation::CubicPolynomial => f.write_str("cubic"),
        }
    }
}

impl FromStr for Interpolation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pchip" => Ok(Interpolation::Pchip),
            "cubic" | "poly" | "polynomial" => Ok(Interpolation::CubicPolynomial),
            _ => Err(Error::Config(format!("unknown interpolation `{s}` (pchip|cubic)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdResult {
    /// Mean quality gap, test minus reference (quality mode).
    pub delta_quality: Option<f64>,
    /// Mean rate change in percent (rate mode).
    pub delta_rate_percent: Option<f64>,
    /// Integration interval: log10 bitrate in quality mode, quality in rate mode.
    pub overlap: [f64; 2],
    pub interpolation: Interpolation,
    pub warnings: Vec<String>,
}

fn check_increasing(xs: &[f64]) -> Result<()> {
    if xs.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) {
        return Err(Error::Curve("abscissae must be strictly increasing".into()));
    }
    Ok(())
}

/// Fritsch–Carlson slopes for a monotone piecewise-cubic Hermite interpolant.
///
/// Interior knots take the weighted harmonic mean of adjacent secants (zero
/// at local extrema); end slopes use the one-sided three-point estimate,
/// clamped so the end intervals stay monotone. Two points give the secant at
/// both ends.
pub fn pchip_slopes(xs: &[f64], ys: &[f64]) -> Result<Vec<f64>> {
    let n = xs.len();
    if n != ys.len() {
        return Err(Error::Curve(format!("{n} abscissae but {} ordinates", ys.len())));
    }
    if n < 2 {
        return Err(Error::Curve("need at least 2 knots".into()));
    }
    check_increasing(xs)?;
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let d: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
    if n == 2 {
        return Ok(vec![d[0], d[0]]);
    }
    let mut m = vec![0.0; n];
    for k in 1..n - 1 {
        if d[k - 1] * d[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            m[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
        }
    }
    m[0] = end_slope(h[0], h[1], d[0], d[1]);
    m[n - 1] = end_slope(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
    Ok(m)
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m.signum() != d0.signum() || d0 == 0.0 {
        0.0
    } else if d0.signum() != d1.signum() && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

/// Value of the Hermite interpolant at `x` (clamped to the knot range).
pub fn eval_hermite(xs: &[f64], ys: &[f64], slopes: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let k = match xs.partition_point(|&v| v <= x) {
        0 => 0,
        p if p >= n => n - 2,
        p => p - 1,
    };
    let h = xs[k + 1] - xs[k];
    let t = ((x - xs[k]) / h).clamp(0.0, 1.0);
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * ys[k]
        + (t3 - 2.0 * t2 + t) * h * slopes[k]
        + (-2.0 * t3 + 3.0 * t2) * ys[k + 1]
        + (t3 - t2) * h * slopes[k + 1]
}

/// Antiderivative over `[0, t]` of the Hermite segment in local units.
fn segment_antiderivative(t: f64, h: f64, y0: f64, y1: f64, m0: f64, m1: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let h00 = t4 / 2.0 - t3 + t;
    let h10 = t4 / 4.0 - 2.0 * t3 / 3.0 + t2 / 2.0;
    let h01 = -t4 / 2.0 + t3;
    let h11 = t4 / 4.0 - t3 / 3.0;
    h * (h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1)
}

/// Exact integral of the piecewise-cubic Hermite interpolant over `[lo, hi]`.
pub fn integrate_interpolant(xs: &[f64], ys: &[f64], slopes: &[f64], lo: f64, hi: f64) -> Result<f64> {
    let n = xs.len();
    if n < 2 || ys.len() != n || slopes.len() != n {
        return Err(Error::Curve("knot, value and slope arrays must match (>= 2)".into()));
    }
    check_increasing(xs)?;
    if lo > hi || lo < xs[0] || hi > xs[n - 1] {
        return Err(Error::Curve(format!(
            "integration bounds [{lo}, {hi}] outside knot range [{}, {}]",
            xs[0],
            xs[n - 1]
        )));
    }
    let mut total = 0.0;
    for k in 0..n - 1 {
        let (a, b) = (xs[k], xs[k + 1]);
        let s = lo.max(a);
        let e = hi.min(b);
        if e <= s {
            continue;
        }
        let h = b - a;
        let prim = |x: f64| segment_antiderivative((x - a) / h, h, ys[k], ys[k + 1], slopes[k], slopes[k + 1]);
        total += prim(e) - prim(s);
    }
    Ok(total)
}

/// Least-squares polynomial coefficients (ascending powers) of `degree`.
fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> Result<Vec<f64>> {
    let rows = xs.len();
    let cols = degree + 1;
    let a = DMatrix::from_fn(rows, cols, |r, c| xs[r].powi(c as i32));
    let b = DVector::from_column_slice(ys);
    let coeffs = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::Curve(format!("polynomial fit failed: {e}")))?;
    Ok(coeffs.iter().copied().collect())
}

fn poly_integral(coeffs: &[f64], lo: f64, hi: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(p, c)| {
            let q = (p + 1) as i32;
            c * (hi.powi(q) - lo.powi(q)) / q as f64
        })
        .sum()
}

/// Integral of the chosen fit of `ys` over `xs` on `[lo, hi]`.
fn fitted_integral(xs: &[f64], ys: &[f64], lo: f64, hi: f64, interp: Interpolation) -> Result<f64> {
    match interp {
        Interpolation::Pchip => {
            let m = pchip_slopes(xs, ys)?;
            integrate_interpolant(xs, ys, &m, lo, hi)
        }
        Interpolation::CubicPolynomial => {
            // Centre the abscissae for conditioning; the integral is
            // translation invariant.
            let shift = xs.iter().sum::<f64>() / xs.len() as f64;
            let cx: Vec<f64> = xs.iter().map(|x| x - shift).collect();
            let degree = (xs.len() - 1).min(3);
            let c = polyfit(&cx, ys, degree)?;
            Ok(poly_integral(&c, lo - shift, hi - shift))
        }
    }
}

fn fit_warnings(curve: &RqCurve, warnings: &mut Vec<String>) {
    match curve.points.len() {
        2 => warnings.push(format!(
            "curve `{}` has 2 points; using linear interpolation",
            curve.label
        )),
        3 => warnings.push(format!(
            "curve `{}` has 3 points; fit is less constrained than with 4",
            curve.label
        )),
        _ => {}
    }
}

/// Mean quality difference (test − reference) over the overlapping
/// log10-bitrate range.
pub fn bd_quality(reference: &RqCurve, test: &RqCurve, interp: Interpolation) -> Result<BdResult> {
    if reference.metric_id != test.metric_id {
        return Err(Error::Curve(format!(
            "metric mismatch: `{}` vs `{}`",
            reference.metric_id, test.metric_id
        )));
    }
    let (rx, ry) = (reference.log_rates(), reference.qualities());
    let (tx, ty) = (test.log_rates(), test.qualities());
    let lo = rx[0].max(tx[0]);
    let hi = rx[rx.len() - 1].min(tx[tx.len() - 1]);
    if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
        return Err(Error::Curve(format!(
            "bitrate ranges do not overlap: `{}` spans [{:.3}, {:.3}] kbps, `{}` spans [{:.3}, {:.3}] kbps",
            reference.label,
            10f64.powf(rx[0]),
            10f64.powf(rx[rx.len() - 1]),
            test.label,
            10f64.powf(tx[0]),
            10f64.powf(tx[tx.len() - 1]),
        )));
    }
    let mut warnings = Vec::new();
    fit_warnings(reference, &mut warnings);
    fit_warnings(test, &mut warnings);
    let ir = fitted_integral(&rx, &ry, lo, hi, interp)?;
    let it = fitted_integral(&tx, &ty, lo, hi, interp)?;
    let delta = (it - ir) / (hi - lo);
    if !delta.is_finite() {
        return Err(Error::Curve("BD quality is not finite".into()));
    }
    Ok(BdResult {
        delta_quality: Some(delta),
        delta_rate_percent: None,
        overlap: [lo, hi],
        interpolation: interp,
        warnings,
    })
}

/// Mean bitrate change of test vs reference at equal quality, in percent.
///
/// Log-rate is fitted as a function of quality, so quality must be strictly
/// increasing with rate on both curves. Disjoint quality ranges are an
/// error; partial overlaps below half of either span produce a warning.
pub fn bd_rate(reference: &RqCurve, test: &RqCurve, interp: Interpolation) -> Result<BdResult> {
    if reference.metric_id != test.metric_id {
        return Err(Error::Curve(format!(
            "metric mismatch: `{}` vs `{}`",
            reference.metric_id, test.metric_id
        )));
    }
    let axes = |c: &RqCurve| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut pts: Vec<(f64, f64)> = c.points.iter().map(|p| (p.quality, p.bitrate_kbps.log10())).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (q, r): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        check_increasing(&q).map_err(|_| {
            Error::Curve(format!("curve `{}` has repeated quality values; cannot fit rate", c.label))
        })?;
        Ok((q, r))
    };
    let (rq, rr) = axes(reference)?;
    let (tq, tr) = axes(test)?;
    let lo = rq[0].max(tq[0]);
    let hi = rq[rq.len() - 1].min(tq[tq.len() - 1]);
    if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
        return Err(Error::Curve(format!(
            "quality ranges do not overlap (`{}` [{:.4}, {:.4}], `{}` [{:.4}, {:.4}]); refusing to extrapolate along the rate axis",
            reference.label,
            rq[0],
            rq[rq.len() - 1],
            test.label,
            tq[0],
            tq[tq.len() - 1],
        )));
    }
    let mut warnings = Vec::new();
    fit_warnings(reference, &mut warnings);
    fit_warnings(test, &mut warnings);
    let overlap = hi - lo;
    for (label, span) in [
        (&reference.label, rq[rq.len() - 1] - rq[0]),
        (&test.label, tq[tq.len() - 1] - tq[0]),
    ] {
        if overlap < 0.5 * span {
            warnings.push(format!(
                "low quality overlap: {:.1}% of `{label}` span; BD-rate relies on extrapolated rates",
                100.0 * overlap / span
            ));
        }
    }
    let ir = fitted_integral(&rq, &rr, lo, hi, interp)?;
    let it = fitted_integral(&tq, &tr, lo, hi, interp)?;
    let delta_log = (it - ir) / overlap;
    let percent = 100.0 * (10f64.powf(delta_log) - 1.0);
    if !percent.is_finite() {
        return Err(Error::Curve("BD rate is not finite".into()));
    }
    Ok(BdResult {
        delta_quality: None,
        delta_rate_percent: Some(percent),
        overlap: [lo, hi],
        interpolation: interp,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(label: &str, pts: &[(f64, f64)]) -> RqCurve {
        RqCurve::from_pairs(label, "psnr_y", pts).unwrap()
    }

    #[test]
    fn linear_data_gives_constant_slopes() {
        let xs = [0.0, 0.5, 1.7, 3.0, 4.2];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let m = pchip_slopes(&xs, &ys).unwrap();
        for s in m {
            assert!((s - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn extremum_gets_zero_slope() {
        let m = pchip_slopes(&[0.0, 1.0, 2.0, 3.0], &[0.0, 2.0, 1.0, 3.0]).unwrap();
        assert_eq!(m[1], 0.0);
        assert_eq!(m[2], 0.0);
    }

    #[test]
    fn three_knot_slopes() {
        // h = [1, 1], secants d = [1, 3]. Interior: w1 = w2 = 3, harmonic
        // mean 6 / (3/1 + 3/3) = 1.5. Left end: (3·1 − 3)/2 = 0 → sign
        // differs from d0 → 0. Right end: (3·3 − 1)/2 = 4, |4| ≤ 9 → 4.
        let m = pchip_slopes(&[0.0, 1.0, 2.0], &[0.0, 1.0, 4.0]).unwrap();
        assert_eq!(m, vec![0.0, 1.5, 4.0]);
    }

    #[test]
    fn rejects_non_increasing() {
        assert!(pchip_slopes(&[0.0, 1.0, 1.0], &[0.0, 1.0, 2.0]).is_err());
        assert!(pchip_slopes(&[0.0], &[0.0]).is_err());
    }

    #[test]
    fn linear_integral_is_trapezoid() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [1.0, 3.0, 5.0];
        let m = pchip_slopes(&xs, &ys).unwrap();
        assert_eq!(integrate_interpolant(&xs, &ys, &m, 0.0, 2.0).unwrap(), 6.0);
        assert_eq!(integrate_interpolant(&xs, &ys, &m, 0.7, 0.7).unwrap(), 0.0);
        assert!(integrate_interpolant(&xs, &ys, &m, -0.1, 1.0).is_err());
        assert!(integrate_interpolant(&xs, &ys, &m, 1.5, 1.0).is_err());
    }

    #[test]
    fn interpolant_hits_knots() {
        let xs = [2.9, 3.1, 3.35, 3.6];
        let ys = [30.0, 33.5, 36.0, 38.2];
        let m = pchip_slopes(&xs, &ys).unwrap();
        for (x, y) in xs.iter().zip(ys) {
            assert!((eval_hermite(&xs, &ys, &m, *x) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_and_shift() {
        let r = curve("ref", &[(1000.0, 30.0), (1800.0, 33.0), (3000.0, 35.5), (5200.0, 37.0)]);
        for interp in [Interpolation::Pchip, Interpolation::CubicPolynomial] {
            let same = bd_quality(&r, &r, interp).unwrap();
            assert!(same.delta_quality.unwrap().abs() < 1e-12);
            let shifted = RqCurve::new(
                "t",
                "psnr_y",
                r.points.iter().map(|p| RqPoint::new(p.bitrate_kbps, p.quality + 2.5)).collect(),
            )
            .unwrap();
            let res = bd_quality(&r, &shifted, interp).unwrap();
            assert!((res.delta_quality.unwrap() - 2.5).abs() < 1e-9);
        }
    }

    #[test]
    fn two_point_linear_case() {
        let r = curve("ref", &[(1000.0, 30.0), (2000.0, 34.0)]);
        let t = curve("test", &[(1000.0, 31.0), (2000.0, 36.0)]);
        let res = bd_quality(&r, &t, Interpolation::Pchip).unwrap();
        assert!((res.delta_quality.unwrap() - 1.5).abs() < 1e-12);
        assert!(res.warnings.iter().any(|w| w.contains("linear")));
    }

    #[test]
    fn disjoint_rates_and_metric_mismatch() {
        let r = curve("ref", &[(100.0, 30.0), (200.0, 34.0)]);
        let t = curve("test", &[(300.0, 31.0), (400.0, 36.0)]);
        let err = bd_quality(&r, &t, Interpolation::Pchip).unwrap_err().to_string();
        assert!(err.contains("ref") && err.contains("test"), "{err}");
        let v = RqCurve::from_pairs("v", "vmaf", &[(100.0, 30.0), (200.0, 34.0)]).unwrap();
        assert!(bd_quality(&r, &v, Interpolation::Pchip).is_err());
    }

    #[test]
    fn rate_cases() {
        let r = curve("ref", &[(1000.0, 30.0), (1800.0, 33.0), (3000.0, 35.5), (5200.0, 37.0)]);
        let res = bd_rate(&r, &r, Interpolation::Pchip).unwrap();
        assert!(res.delta_rate_percent.unwrap().abs() < 1e-9);
        let doubled = RqCurve::new(
            "t",
            "psnr_y",
            r.points.iter().map(|p| RqPoint::new(2.0 * p.bitrate_kbps, p.quality)).collect(),
        )
        .unwrap();
        let res = bd_rate(&r, &doubled, Interpolation::Pchip).unwrap();
        assert!((res.delta_rate_percent.unwrap() - 100.0).abs() < 1e-9);

        let far = curve("far", &[(1000.0, 50.0), (2000.0, 55.0)]);
        assert!(bd_rate(&r, &far, Interpolation::Pchip).is_err());

        let partial = curve("partial", &[(900.0, 36.0), (1500.0, 39.0), (2500.0, 42.0), (4000.0, 44.0)]);
        let res = bd_rate(&r, &partial, Interpolation::Pchip).unwrap();
        assert!(res.warnings.iter().any(|w| w.contains("low quality overlap")));
    }

    #[test]
    fn csv_input() {
        let text = "bitrate_kbps,quality\n2000, 34\n1000,30\n";
        let c = RqCurve::from_csv_reader("x", "psnr_y", text.as_bytes()).unwrap();
        assert_eq!(c.points[0], RqPoint::new(1000.0, 30.0));
        assert!(RqCurve::from_csv_reader("x", "psnr_y", "rate,q\n1,2\n".as_bytes()).is_err());
        assert!(RqCurve::from_csv_reader("x", "psnr_y", "bitrate_kbps,quality\n0,2\n1,3\n".as_bytes()).is_err());
    }
}
