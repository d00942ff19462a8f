mod common;

use rqpipe_core::metrics::{psnr_y, sequence_psnr_y, Aggregation};
use rqpipe_core::{Frame, Plane};

#[test]
fn psnr_matches_naive_oracle() {
    let mut rng = common::rng(77);
    for n in 0..100 {
        let bd = if n % 3 == 0 { 10 } else { 8 };
        let a = common::random_plane(&mut rng, 64, 64, bd);
        let b = common::random_plane(&mut rng, 64, 64, bd);
        let got = psnr_y(&Frame::monochrome(a.clone()), &Frame::monochrome(b.clone()), bd).unwrap();
        let want = common::psnr_naive(&a, &b, bd as u32);
        assert!((got - want).abs() < 1e-9, "pair {n}: {got} vs {want}");
    }
}

#[test]
fn uniform_difference_analytic_values() {
    // MSE = d^2 everywhere: PSNR = 20 log10(peak / d).
    let cases = [(8u8, 1u16, 48.1308036086791), (8, 2, 42.110203695399484), (10, 1, 60.1975126742432)];
    for (bd, d, want) in cases {
        let a = Plane::filled(16, 16, bd, 100);
        let b = Plane::filled(16, 16, bd, 100 + d);
        let got = psnr_y(&Frame::monochrome(a), &Frame::monochrome(b), bd).unwrap();
        assert!((got - want).abs() < 1e-4, "{bd}-bit d={d}: {got}");
    }
}

#[test]
fn identical_frames_and_aggregation() {
    let a = Frame::monochrome(Plane::filled(8, 8, 8, 7));
    assert_eq!(psnr_y(&a, &a, 8).unwrap(), f64::INFINITY);
    let b = Frame::monochrome(Plane::filled(8, 8, 8, 8));
    let refs = [a.clone(), a.clone()];
    let dist = [a.clone(), b];
    let mean = sequence_psnr_y(&refs, &dist, Aggregation::MeanOfPerFrame, 100.0).unwrap();
    assert!((mean.sequence_value - (100.0 + 48.1308036086791) / 2.0).abs() < 1e-9);
    // Mean MSE = 0.5.
    let pooled = sequence_psnr_y(&refs, &dist, Aggregation::FromMeanMse, 100.0).unwrap();
    assert!((pooled.sequence_value - 10.0 * (255.0f64 * 255.0 / 0.5).log10()).abs() < 1e-9);
}
