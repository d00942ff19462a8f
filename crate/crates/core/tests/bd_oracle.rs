mod common;

use rqpipe_core::bd::{
    bd_quality, bd_rate, eval_hermite, integrate_interpolant, pchip_slopes, Interpolation, RqCurve,
};

/// Values produced by scipy.interpolate.PchipInterpolator 1.15.3.
struct ScipyCase {
    xs: &'static [f64],
    ys: &'static [f64],
    slopes: &'static [f64],
    eval_x: &'static [f64],
    eval_y: &'static [f64],
    partial: (f64, f64, f64),
    full: f64,
}

const SCIPY: &[ScipyCase] = &[
    ScipyCase {
        xs: &[0.0, 1.0, 2.0],
        ys: &[0.0, 1.0, 4.0],
        slopes: &[0.0, 1.5, 4.0],
        eval_x: &[0.0, 0.3333333333333333, 0.6666666666666666, 1.0, 1.3333333333333333, 1.6666666666666665, 2.0],
        eval_y: &[0.0, 0.14814814814814814, 0.5185185185185185, 1.0, 1.7037037037037035, 2.7407407407407405, 4.0],
        partial: (0.6, 1.8, 1.853333333333334),
        full: 2.6666666666666665,
    },
    ScipyCase {
        xs: &[3.0, 3.255272505103306, 3.4913616938342726, 3.7481880270062002],
        ys: &[32.1, 34.6, 36.2, 37.9],
        slopes: &[11.360514787114852, 7.9918107683744735, 6.698356276512989, 6.53701827239526],
        eval_x: &[3.0, 3.1246980045010333, 3.2493960090020666, 3.3740940135031003, 3.4987920180041336, 3.623490022505167, 3.7481880270062002],
        eval_y: &[32.1, 33.42848739537172, 34.55276142484339, 35.44321427052791, 36.24975461122397, 37.079769682520805, 37.9],
        partial: (3.22445640810186, 3.6733692243055804, 16.124943006702544),
        full: 26.411498880509193,
    },
    ScipyCase {
        xs: &[0.0, 0.7, 1.5, 2.1, 3.4],
        ys: &[1.0, 2.5, 2.2, 4.0, 3.9],
        slopes: &[3.317857142857143, 0.0, 0.0, 0.0, -0.230769230769231],
        eval_x: &[0.0, 0.5666666666666667, 1.1333333333333333, 1.7, 2.2666666666666666, 2.833333333333333, 3.4],
        eval_y: &[1.0, 2.4256797322103445, 2.3312934027777783, 2.6666666666666665, 3.999789274937204, 3.98204959625078, 3.9],
        partial: (1.02, 3.06, 6.7826231552116525),
        full: 10.267979166666667,
    },
    ScipyCase {
        xs: &[-1.0, -0.2, 0.3, 1.9, 2.0, 4.5],
        ys: &[3.0, 2.0, 2.5, 6.0, 6.1, 5.0],
        slopes: &[-2.6346153846153846, 0.0, 1.288720046756283, 1.2370062370062327, 0.0, -1.3199999999999992],
        eval_x: &[-1.0, -0.08333333333333337, 0.8333333333333333, 1.75, 2.6666666666666665, 3.583333333333333, 4.5],
        eval_y: &[3.0, 2.0420668982834385, 3.5662736422526025, 5.777515341613119, 6.0791407407407405, 5.82055925925926, 5.0],
        partial: (0.6499999999999999, 3.95, 18.08181411394127),
        full: 24.93720196312394,
    },
];

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1.0)
}

#[test]
fn pchip_matches_scipy() {
    for c in SCIPY {
        let s = pchip_slopes(c.xs, c.ys).unwrap();
        for (a, b) in s.iter().zip(c.slopes) {
            assert!(close(*a, *b, 1e-12), "slope {a} vs {b}");
        }
        for (x, y) in c.eval_x.iter().zip(c.eval_y) {
            let v = eval_hermite(c.xs, c.ys, &s, *x);
            assert!(close(v, *y, 1e-12), "f({x}) = {v} vs {y}");
        }
        let (lo, hi, want) = c.partial;
        assert!(close(integrate_interpolant(c.xs, c.ys, &s, lo, hi).unwrap(), want, 1e-12));
        let (first, last) = (c.xs[0], *c.xs.last().unwrap());
        assert!(close(integrate_interpolant(c.xs, c.ys, &s, first, last).unwrap(), c.full, 1e-12));
    }
}

#[test]
fn closed_form_integral_matches_quadrature() {
    use rand::Rng;
    let mut rng = common::rng(31);
    for _ in 0..20 {
        let mut xs = vec![rng.gen_range(-2.0..0.0)];
        for _ in 0..4 {
            let last = *xs.last().unwrap();
            xs.push(last + rng.gen_range(0.1..1.5));
        }
        let ys: Vec<f64> = (0..5).map(|_| rng.gen_range(20.0..45.0)).collect();
        let s = pchip_slopes(&xs, &ys).unwrap();
        let (lo, hi) = (xs[0], xs[4]);
        let exact = integrate_interpolant(&xs, &ys, &s, lo, hi).unwrap();
        let quad = common::trapezoid(|x| eval_hermite(&xs, &ys, &s, x), lo, hi, 100_000);
        assert!(((exact - quad) / exact).abs() < 1e-6, "{exact} vs {quad}");
    }
}

#[test]
fn interpolant_is_monotone_on_monotone_data() {
    let xs = [0.0, 0.4, 1.9, 2.0, 3.7, 5.0];
    let ys = [1.0, 1.1, 7.0, 7.0, 7.5, 12.0];
    let s = pchip_slopes(&xs, &ys).unwrap();
    let mut prev = f64::NEG_INFINITY;
    for k in 0..=10_000 {
        let x = 5.0 * k as f64 / 10_000.0;
        let v = eval_hermite(&xs, &ys, &s, x);
        assert!(v >= prev - 1e-12, "dip at {x}");
        prev = v;
    }
    for (x, y) in xs.iter().zip(ys) {
        assert_eq!(eval_hermite(&xs, &ys, &s, *x), y);
    }
}

#[test]
fn bd_against_scipy_reference() {
    let a = RqCurve::from_pairs("a", "psnr_y", &[(1000.0, 32.1), (1800.0, 34.6), (3100.0, 36.2), (5600.0, 37.9)]).unwrap();
    let b = RqCurve::from_pairs("b", "psnr_y", &[(900.0, 32.5), (1500.0, 34.9), (2800.0, 36.8), (5000.0, 38.3)]).unwrap();
    let q = bd_quality(&a, &b, Interpolation::Pchip).unwrap().delta_quality.unwrap();
    assert!((q - 0.9013101655745175).abs() < 1e-9, "{q}");
    let r = bd_rate(&a, &b, Interpolation::Pchip).unwrap().delta_rate_percent.unwrap();
    assert!((r - -23.556578993668197).abs() < 1e-9, "{r}");
}

fn sample_curve(label: &str, offset: f64, rate_scale: f64) -> RqCurve {
    let pts: Vec<(f64, f64)> = [(800.0, 31.2), (1500.0, 33.9), (2900.0, 36.1), (5200.0, 37.4)]
        .iter()
        .map(|&(r, q)| (r * rate_scale, q + offset))
        .collect();
    RqCurve::from_pairs(label, "psnr_y", &pts).unwrap()
}

#[test]
fn bd_properties() {
    for interp in [Interpolation::Pchip, Interpolation::CubicPolynomial] {
        let r = sample_curve("r", 0.0, 1.0);
        assert!(bd_quality(&r, &r, interp).unwrap().delta_quality.unwrap().abs() < 1e-12);
        for d in [0.5, 2.5, -3.0] {
            let t = sample_curve("t", d, 1.0);
            let got = bd_quality(&r, &t, interp).unwrap().delta_quality.unwrap();
            assert!((got - d).abs() < 1e-9, "{interp} shift {d}: {got}");
        }
        let t = RqCurve::from_pairs("t", "psnr_y", &[(700.0, 31.0), (1600.0, 34.5), (3000.0, 36.0), (6000.0, 38.0)]).unwrap();
        let ab = bd_quality(&r, &t, interp).unwrap().delta_quality.unwrap();
        let ba = bd_quality(&t, &r, interp).unwrap().delta_quality.unwrap();
        assert!((ab + ba).abs() < 1e-12);
        for k in [0.001, 3.0, 1e4] {
            let scaled = |c: &RqCurve| {
                let pts: Vec<(f64, f64)> = c.points.iter().map(|p| (p.bitrate_kbps * k, p.quality)).collect();
                RqCurve::from_pairs("s", "psnr_y", &pts).unwrap()
            };
            let s = bd_quality(&scaled(&r), &scaled(&t), interp).unwrap().delta_quality.unwrap();
            assert!((s - ab).abs() < 1e-12, "{interp} scale {k}: {s} vs {ab}");
        }
        let doubled = sample_curve("d", 0.0, 2.0);
        let rate = bd_rate(&r, &doubled, interp).unwrap().delta_rate_percent.unwrap();
        assert!((rate - 100.0).abs() < 1e-9, "{interp}: {rate}");
    }
}

#[test]
fn hand_integrated_linear_case() {
    let r = RqCurve::from_pairs("r", "q", &[(1000.0, 30.0), (2000.0, 34.0)]).unwrap();
    let t = RqCurve::from_pairs("t", "q", &[(1000.0, 31.0), (2000.0, 36.0)]).unwrap();
    let res = bd_quality(&r, &t, Interpolation::Pchip).unwrap();
    assert!((res.delta_quality.unwrap() - 1.5).abs() < 1e-12);
    assert!(!res.warnings.is_empty());
}

#[test]
fn disjoint_ranges_are_errors() {
    let r = sample_curve("r", 0.0, 1.0);
    let far = sample_curve("far", 20.0, 100.0);
    assert!(bd_quality(&r, &far, Interpolation::Pchip).is_err());
    assert!(bd_rate(&r, &far, Interpolation::Pchip).is_err());
}
