mod common;

use rand::Rng;
use rqpipe_core::cnn::{
    build_mfrnet_style, conv2d, tiled_apply, Activation, ConvParams, ConvWeights, LayerSpec, MfrnetConfig, Network,
    NetworkSpec, Precision, Tensor, WeightFile,
};
use rqpipe_core::Plane;

fn random_vec(rng: &mut impl Rng, n: usize, amp: f32) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-amp..amp)).collect()
}

#[test]
fn conv2d_matches_brute_force() {
    let mut rng = common::rng(99);
    for n in 0..50 {
        let c = rng.gen_range(1..=4);
        let oc = rng.gen_range(1..=4);
        let k = [1, 3, 5][rng.gen_range(0..3)];
        let (kh, kw) = if n % 5 == 0 { (k, 1) } else { (k, k) };
        let stride = rng.gen_range(1..=2);
        let pad = rng.gen_range(0..=kh / 2);
        let h = rng.gen_range(kh..=14);
        let w = rng.gen_range(kw..=14);
        let x = random_vec(&mut rng, c * h * w, 1.0);
        let wts = random_vec(&mut rng, oc * c * kh * kw, 1.0);
        let bias = random_vec(&mut rng, oc, 0.5);
        let xt = Tensor::from_vec(c, h, w, x.clone()).unwrap();
        let cw = ConvWeights::new(oc, c, kh, kw, wts.clone(), bias.clone()).unwrap();
        let to64 = |v: &[f32]| v.iter().map(|&a| a as f64).collect::<Vec<_>>();
        let (want, oh, ow) = common::conv2d_naive(
            &to64(&x),
            (c, h, w),
            &to64(&wts),
            &to64(&bias),
            (oc, kh, kw),
            stride,
            pad,
        );
        for (precision, tol) in [(Precision::Single, 1e-5), (Precision::Double, 1e-6)] {
            let got = conv2d(&xt, &cw, ConvParams { stride, pad }, precision, "t").unwrap();
            assert_eq!(got.shape(), (oc, oh, ow), "case {n}");
            for (a, b) in got.data().iter().zip(&want) {
                let err = (*a as f64 - b).abs() / b.abs().max(1.0);
                assert!(err < tol, "case {n} {precision:?}: {a} vs {b}");
            }
        }
    }
}

fn toy_spec(residual: bool, act: bool) -> NetworkSpec {
    let mut layers = vec![LayerSpec::conv("c1", "in", 1, 4, 3)];
    let mut last = "c1";
    if act {
        layers.push(LayerSpec::activation("a1", "c1", Activation::LeakyRelu { alpha: 0.2 }));
        last = "a1";
    }
    layers.push(LayerSpec::conv("c2", last, 4, 1, 3));
    NetworkSpec {
        layers,
        input_id: "in".into(),
        output_id: "c2".into(),
        residual_global: residual,
        precision: Precision::Single,
    }
}

#[test]
fn toy_network_matches_scripted_oracle() {
    let mut rng = common::rng(4);
    let spec = toy_spec(true, true);
    let weights = WeightFile::random_for(&spec, 12, 0.3);
    let net = Network::new(spec, weights.clone()).unwrap();
    let p = common::random_plane(&mut rng, 20, 12, 10);
    let out = net.apply_plane(&p).unwrap();

    let peak = 1023.0;
    let x: Vec<f64> = p.data().iter().map(|&v| v as f64 / peak).collect();
    let get = |id: &str| {
        let w = weights.get(id).unwrap();
        (
            w.weights.iter().map(|&v| v as f64).collect::<Vec<_>>(),
            w.bias.iter().map(|&v| v as f64).collect::<Vec<_>>(),
        )
    };
    let (w1, b1) = get("c1");
    let (w2, b2) = get("c2");
    let (h1, _, _) = common::conv2d_naive(&x, (1, 12, 20), &w1, &b1, (4, 3, 3), 1, 1);
    let h1: Vec<f64> = h1.into_iter().map(|v| common::leaky(v, 0.2f32 as f64)).collect();
    let (y, _, _) = common::conv2d_naive(&h1, (4, 12, 20), &w2, &b2, (1, 3, 3), 1, 1);
    for (k, (&got, (yv, xv))) in out.data().iter().zip(y.iter().zip(&x)).enumerate() {
        let want = ((yv + xv) * peak).round().clamp(0.0, peak);
        assert!((got as f64 - want).abs() <= 1.0, "sample {k}: {got} vs {want}");
    }
}

#[test]
fn identity_and_zero_residual_networks_reproduce_input() {
    let mut rng = common::rng(8);
    let p = common::random_plane(&mut rng, 33, 17, 10);

    let id_spec = NetworkSpec {
        layers: vec![LayerSpec::conv("c", "in", 1, 1, 1)],
        input_id: "in".into(),
        output_id: "c".into(),
        residual_global: false,
        precision: Precision::Single,
    };
    let mut w = WeightFile::new();
    w.insert("c", ConvWeights::new(1, 1, 1, 1, vec![1.0], vec![0.0]).unwrap());
    assert_eq!(Network::new(id_spec, w).unwrap().apply_plane(&p).unwrap(), p);

    let spec = build_mfrnet_style(&MfrnetConfig::new(2, 2, 8, 4));
    let zeros = WeightFile::zeros_for(&spec);
    assert_eq!(Network::new(spec, zeros).unwrap().apply_plane(&p).unwrap(), p);
}

#[test]
fn tiled_inference_is_bit_exact() {
    let spec = build_mfrnet_style(&MfrnetConfig::new(2, 2, 8, 4));
    let net = Network::new(spec.clone(), WeightFile::random_for(&spec, 3, 0.2)).unwrap();
    let r = net.receptive_radius().unwrap();
    let mut rng = common::rng(10);
    let p = common::random_plane(&mut rng, 64, 64, 8);
    let whole = net.apply_plane(&p).unwrap();
    for (tile, overlap) in [(32, r), (32, r + 3), (20, r), (7, r)] {
        assert_eq!(tiled_apply(&net, &p, tile, overlap).unwrap(), whole, "tile {tile} overlap {overlap}");
    }
    let err = tiled_apply(&net, &p, 32, 0).unwrap_err().to_string();
    assert!(err.contains(&format!("need at least {r}")), "{err}");
}

#[test]
fn receptive_radius_matches_perturbation() {
    for cfg in [MfrnetConfig::new(1, 2, 4, 4), MfrnetConfig::new(2, 2, 8, 4)] {
        let spec = build_mfrnet_style(&cfg);
        let net = Network::new(spec.clone(), WeightFile::random_for(&spec, 21, 0.3)).unwrap();
        let (w, h) = (41, 41);
        let base = Tensor::zeros(1, h, w);
        let mut bumped = base.clone();
        bumped.data_mut()[20 * w + 20] = 1.0;
        let a = net.forward(&base).unwrap();
        let b = net.forward(&bumped).unwrap();
        let mut reach = 0;
        for y in 0..h {
            for x in 0..w {
                if a.at(0, y, x) != b.at(0, y, x) {
                    reach = reach.max(x.abs_diff(20).max(y.abs_diff(20)));
                }
            }
        }
        assert_eq!(Some(reach), net.receptive_radius(), "{cfg:?}");
    }
}

#[test]
fn linear_network_is_linear_and_translation_equivariant() {
    let spec = toy_spec(false, false);
    let mut weights = WeightFile::random_for(&spec, 5, 0.5);
    for id in ["c1", "c2"] {
        weights.get_mut(id).unwrap().bias.iter_mut().for_each(|b| *b = 0.0);
    }
    let mut dspec = spec.clone();
    dspec.precision = Precision::Double;
    let net = Network::new(dspec, weights).unwrap();
    let mut rng = common::rng(6);
    let (h, w) = (16, 16);
    let x = Tensor::from_vec(1, h, w, random_vec(&mut rng, h * w, 1.0)).unwrap();
    let y = Tensor::from_vec(1, h, w, random_vec(&mut rng, h * w, 1.0)).unwrap();
    let combo: Vec<f32> = x.data().iter().zip(y.data()).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
    let fx = net.forward(&x).unwrap();
    let fy = net.forward(&y).unwrap();
    let fc = net.forward(&Tensor::from_vec(1, h, w, combo).unwrap()).unwrap();
    for ((c, a), b) in fc.data().iter().zip(fx.data()).zip(fy.data()) {
        assert!((c - (2.0 * a - 0.5 * b)).abs() < 1e-5);
    }

    // Shifting the input by (3, 2) shifts the output interior by the same.
    let r = net.receptive_radius().unwrap();
    let shifted = x.crop(3, 2, w - 3, h - 2);
    let fs = net.forward(&shifted).unwrap();
    for yy in r..(h - 2 - r) {
        for xx in r..(w - 3 - r) {
            assert_eq!(fs.at(0, yy, xx), fx.at(0, yy + 2, xx + 3));
        }
    }
}

#[test]
fn mfrnet_style_default_has_four_dense_blocks() {
    let spec = build_mfrnet_style(&MfrnetConfig::new(4, 4, 32, 16));
    let table = spec.validate().unwrap();
    assert_eq!(spec.dense_blocks(), 4);
    assert!(table.receptive_radius.is_some());
    let spec6 = build_mfrnet_style(&MfrnetConfig::new(6, 3, 16, 8));
    spec6.validate().unwrap();
    assert_eq!(spec6.dense_blocks(), 6);
}

#[test]
fn weight_file_round_trip_through_disk() {
    let spec = build_mfrnet_style(&MfrnetConfig::new(2, 2, 8, 4));
    let w = WeightFile::random_for(&spec, 1, 0.1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.rqpw");
    w.save(&path).unwrap();
    assert_eq!(WeightFile::load(&path).unwrap(), w);
    let p = Plane::filled(8, 8, 8, 9);
    let a = Network::new(spec.clone(), w.clone()).unwrap().apply_plane(&p).unwrap();
    let b = Network::new(spec, WeightFile::load(&path).unwrap()).unwrap().apply_plane(&p).unwrap();
    assert_eq!(a, b);
}
