mod common;

use common::*;
use rand::Rng;
use selfx::align::{fit_affine_ransac, warp, AffineParams, RansacConfig, Warped};
use selfx::features::{diagonal_sq, extract_features, match_blocks, FeatureMap};
use selfx::frames::{resample_bicubic, Frame};
use selfx::fusion::{compute_weights, fuse_global, reconstruct_patch, TransferGains, WeightInput};
use selfx::metrics::{charbonnier, psnr, ssim};

#[test]
fn luma_feature_commutes_with_rotation() {
    let img = texture(&mut rng(10), 40, 32, 3);
    let a = extract_features(&img).unwrap();
    let b = extract_features(&img.rotate90()).unwrap();
    assert_eq!((b.width, b.height), (a.height, a.width));
    // rotate90: out(x, y) = in(w − 1 − y, x)
    for y in 2..b.height - 2 {
        for x in 2..b.width - 2 {
            let expect = a.get(a.width - 1 - y, x, 0);
            assert!((b.get(x, y, 0) - expect).abs() < 1e-5);
        }
    }
}

#[test]
fn shifted_reference_offsets_every_interior_match() {
    let q = random_features(&mut rng(11), 24, 20, 8);
    let shift = 4;
    let r = FeatureMap {
        data: (0..q.height)
            .flat_map(|y| {
                let q = &q;
                (0..q.width).flat_map(move |x| {
                    (0..q.channels).map(move |c| if x >= shift { q.get(x - shift, y, c) } else { 0.5 })
                })
            })
            .collect(),
        ..q.clone()
    };
    let m = match_blocks(&q, &r).unwrap();
    let mut interior = Vec::new();
    for g in 0..m.width * m.height {
        let (gx, gy) = m.query_center(g);
        if gx + shift + 1 < q.width {
            assert_eq!(m.correspondences[g], (gx + shift, gy));
            interior.push(m.distance[g]);
        }
    }
    let mean = interior.iter().sum::<f64>() / interior.len() as f64;
    let expect = 16.0 / diagonal_sq(q.width, q.height);
    assert!((mean - expect).abs() < 1e-6);
}

#[test]
fn match_blocks_equals_quadratic_scan() {
    let mut r = rng(12);
    let q = random_features(&mut r, 20, 20, 8);
    let f = random_features(&mut r, 20, 20, 8);
    assert_eq!(match_blocks(&q, &f).unwrap(), brute_match_blocks(&q, &f));
}

#[test]
fn ransac_tolerates_planted_outliers() {
    let truth = AffineParams::similarity(10f64.to_radians(), 1.3, 4.0, -2.0);
    let mut r = rng(13);
    let mut pairs = Vec::new();
    let mut planted = Vec::new();
    for i in 0..100 {
        let p = [r.random_range(0.0..30.0), r.random_range(0.0..30.0)];
        if i % 10 < 3 {
            pairs.push(([r.random_range(-10.0..50.0), r.random_range(-10.0..50.0)], p));
            planted.push(true);
        } else {
            let (x, y) = truth.apply(p[0], p[1]);
            pairs.push(([x, y], p));
            planted.push(false);
        }
    }
    let fit = fit_affine_ransac(&pairs, &RansacConfig::default()).unwrap();
    assert!(fit.params.max_abs_diff(&truth) < 1e-2);
    let caught = planted.iter().zip(&fit.inliers).filter(|(&p, &i)| p && !i).count();
    assert!(caught as f64 >= 0.95 * 30.0);
}

#[test]
fn translation_warp_is_a_shift() {
    let ramp = Frame::from_fn(20, 12, 1, |x, y, _| (x as f64 + 0.5 * y as f64) / 26.0);
    let w = warp(&ramp, &AffineParams::translation(3.0, 0.0)).unwrap();
    for y in 0..12 {
        for x in 0..20 {
            if w.valid.get(x, y, 0) > 0.0 {
                assert!((w.image.get(x, y, 0) - ramp.get(x - 3, y, 0)).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn round_trip_bound_on_smooth_content() {
    let img = Frame::from_fn(48, 48, 1, |x, y, _| {
        0.5 + 0.2 * (x as f64 * 0.2).sin() * (y as f64 * 0.15).cos()
    });
    let theta = AffineParams::similarity(0.15, 1.1, 2.5, -1.5);
    let there = warp(&img, &theta).unwrap();
    let back = warp(&there.image, &theta.inverse().unwrap()).unwrap();
    for y in 8..40 {
        for x in 8..40 {
            if back.valid.get(x, y, 0) > 0.0 {
                assert!((back.image.get(x, y, 0) - img.get(x, y, 0)).abs() < 2e-2);
            }
        }
    }
}

#[test]
fn two_way_softmax_closed_form() {
    let s1 = Frame::filled(6, 6, 1, 0.9f64);
    let s2 = Frame::filled(6, 6, 1, 0.5f64);
    let v = Frame::filled(6, 6, 1, 1.0f64);
    let inputs = [
        WeightInput {
            similarity: &s1,
            mean_distance: 0.03,
            valid: &v,
        },
        WeightInput {
            similarity: &s2,
            mean_distance: 0.03,
            valid: &v,
        },
    ];
    let w = compute_weights(&inputs, 0.2).unwrap();
    let expect = 1.0 / (1.0 + (-2.0f64).exp());
    assert!(w.weights[0].data().iter().all(|x| (x - expect).abs() < 1e-4));
    assert!((expect - 0.8808).abs() < 1e-4);
}

#[test]
fn fuse_global_equals_direct_summation() {
    let mut r = rng(15);
    let refs: Vec<Warped<Frame<f64>, f64>> = (0..3)
        .map(|_| Warped {
            image: noise(&mut r, 8, 8, 3),
            valid: Frame::from_fn(8, 8, 1, |x, _, _| if x < 7 { 1.0 } else { 0.0 }),
        })
        .collect();
    let weights: Vec<Frame<f64>> = (0..3).map(|_| noise(&mut r, 8, 8, 1)).collect();
    let fused = fuse_global(&refs, &weights).unwrap();
    for y in 0..8 {
        for x in 0..8 {
            for c in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += weights[k].get(x, y, 0) * refs[k].image.get(x, y, c);
                }
                assert!((fused.image.get(x, y, c) - s).abs() < 1e-6);
            }
            assert_eq!(fused.valid.get(x, y, 0), if x < 7 { 1.0 } else { 0.0 });
        }
    }
}

#[test]
fn ground_truth_reference_reconstructs_ground_truth() {
    let gt = texture(&mut rng(16), 64, 64, 3).map(|v| 0.1 + 0.8 * v).cast::<f32>();
    let lr = resample_bicubic(&gt, 0.25).unwrap();
    let fused = Warped {
        image: gt.clone(),
        valid: Frame::filled(64, 64, 1, 1.0f32),
    };
    let gains = TransferGains { alpha: 1.0, beta: 0.0 };
    let out = reconstruct_patch(&lr, Some(&fused), &[], 4, gains).unwrap();
    assert!(max_abs_diff(&out, &gt) < 2e-2);
}

#[test]
fn constant_content_stays_constant() {
    let lr = Frame::filled(8, 8, 3, 0.4f64);
    let fused = Warped {
        image: Frame::filled(32, 32, 3, 0.7),
        valid: Frame::filled(32, 32, 1, 1.0),
    };
    let locals = vec![Frame::filled(8, 8, 3, 0.2); 2];
    let out = reconstruct_patch(&lr, Some(&fused), &locals, 4, TransferGains::default()).unwrap();
    assert!(out.data().iter().all(|v| (v - 0.4).abs() < 1e-4));
}

#[test]
fn psnr_of_known_noise_variance() {
    let mut r = rng(17);
    let gt = Frame::from_fn(256, 256, 1, |_, _, _| r.random_range(0.25..0.75));
    let half = (0.03f64).sqrt(); // variance of U(−a, a) is a²/3 = 0.01
    let noisy: Vec<f64> = gt.data().iter().map(|v| v + r.random_range(-half..half)).collect();
    let pred = Frame::new(256, 256, 1, noisy).unwrap();
    let db = psnr(&pred, &gt).unwrap();
    assert!((db - 20.0).abs() < 0.1, "{db}");
}

#[test]
fn ssim_matches_per_window_formula() {
    let mut r = rng(18);
    let a = texture(&mut r, 32, 32, 1);
    let b = a.zip_map(&noise(&mut r, 32, 32, 1), |x, n| (x + 0.2 * (n - 0.5)).clamp(0.0, 1.0));
    assert!((ssim(&a, &b).unwrap() - ssim_per_window(&a, &b)).abs() < 1e-6);

    let inverted = a.map(|v| 1.0 - v);
    let s = ssim(&inverted, &a).unwrap();
    assert!(s < 1.0);
    assert!((s - ssim_per_window(&inverted, &a)).abs() < 1e-6);
}

#[test]
fn charbonnier_closed_form() {
    let a = Frame::filled(10, 10, 1, 0.2f64);
    let b = Frame::filled(10, 10, 1, 0.5f64);
    let c = charbonnier(&a, &b, 1e-3).unwrap();
    assert!((c - (0.09f64 + 1e-6).sqrt()).abs() < 1e-12);
    assert!((c - 0.3000017).abs() < 1e-7);
    assert_eq!(charbonnier(&a, &a, 1e-3).unwrap(), 1e-3);
}
