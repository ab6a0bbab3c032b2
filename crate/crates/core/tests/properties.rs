mod common;

use common::*;
use proptest::prelude::*;
use selfx::align::{fit_affine_ransac, warp, AffineParams, RansacConfig, Warped};
use selfx::features::{match_blocks, MatchMaps};
use selfx::frames::{band_limit, make_grid, resample_bicubic, resize_bicubic, splice, Frame};
use selfx::fusion::{compute_weights, fuse_global, reconstruct_patch, TransferGains, WeightInput};
use selfx::metrics::{charbonnier, psnr, ssim, FrameMetrics, MetricReport};
use selfx::retrieval::{template_match, template_match_pyramid, ExemplarCandidate, ExemplarKind};
use selfx::selection::{select, ScoredCandidate, SelectionConfig};

fn frame_strategy(w: usize, h: usize, ch: usize) -> impl Strategy<Value = Frame<f64>> {
    proptest::collection::vec(0.0f64..=1.0, w * h * ch).prop_map(move |d| Frame::new(w, h, ch, d).unwrap())
}

fn sized_frame(max: usize) -> impl Strategy<Value = Frame<f64>> {
    (4..max, 4..max, prop_oneof![Just(1usize), Just(3usize)]).prop_flat_map(|(w, h, c)| frame_strategy(w, h, c))
}

fn candidate(scale: f64, mean_d: f64, score: f64, frame: usize) -> ScoredCandidate<f64> {
    (
        ExemplarCandidate {
            source_frame: frame,
            scale,
            location: (frame, 0),
            size: 8,
            score,
            kind: ExemplarKind::Global,
        },
        MatchMaps {
            width: 1,
            height: 1,
            similarity: vec![score],
            distance: vec![mean_d],
            correspondences: vec![(1, 1)],
        },
    )
}

fn candidates() -> impl Strategy<Value = Vec<ScoredCandidate<f64>>> {
    proptest::collection::vec(
        (
            prop::sample::select(vec![1.2, 1.4, 1.7, 2.1, 2.5, 2.9, 3.5]),
            0.0f64..0.3,
            -1.0f64..1.0,
            0usize..30,
        ),
        1..10,
    )
    .prop_map(|v| {
        v.into_iter()
            .enumerate()
            // Distinct frames keep every candidate distinguishable.
            .map(|(i, (s, d, sc, f))| candidate(s, d, sc, f * 10 + i))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn splice_of_cut_is_identity(img in sized_frame(90), p in 4usize..24, frac in 0.2f64..1.0) {
        let p = p.min(img.width()).min(img.height());
        let stride = ((p as f64 * frac) as usize).clamp(1, p.saturating_sub(1).max(1));
        let grid = make_grid(img.width(), img.height(), p, stride).unwrap();
        let patches: Vec<_> = grid.origins.iter().map(|&(x, y)| ((x, y), img.crop(x, y, p, p).unwrap())).collect();
        let out = splice(&patches, img.width(), img.height()).unwrap();
        prop_assert!(max_abs_diff(&out, &img) <= 1e-6);
    }

    #[test]
    fn upscale_then_downscale_restores_dims(w in 1usize..300, h in 1usize..300, f in 1.0f64..4.0) {
        let img = Frame::<f32>::filled(w, h, 1, 0.5);
        let up = resample_bicubic(&img, f).unwrap();
        let back = resample_bicubic(&up, 1.0 / f).unwrap();
        prop_assert_eq!(back.dims(), (w, h));
    }

    #[test]
    fn band_limit_never_adds_variance(img in sized_frame(48), f in 1.05f64..4.0) {
        let out = band_limit(&img, f).unwrap();
        prop_assert_eq!(out.dims(), img.dims());
        for (a, b) in out.channel_variances().iter().zip(img.channel_variances()) {
            prop_assert!(*a <= b + 1e-12, "{} > {}", a, b);
        }
    }

    #[test]
    fn resampling_is_deterministic_and_in_range(img in sized_frame(40), f in 0.3f64..3.0) {
        let a = resample_bicubic(&img, f).unwrap();
        prop_assert_eq!(&a, &resample_bicubic(&img, f).unwrap());
        prop_assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn pyramid_search_tracks_exhaustive_score(seed in 0u64..10_000, q in 8usize..24, tw in 40usize..96, th in 40usize..96) {
        let mut r = rng(seed);
        let target = texture(&mut r, tw, th, 1);
        let (x, y) = (seed as usize % (tw - q + 1), (seed as usize / 7) % (th - q + 1));
        let query = target.crop(x, y, q, q).unwrap();
        let exact = template_match(&query, &target).unwrap();
        let fast = template_match_pyramid(&query, &target, 2).unwrap();
        prop_assert!((exact.score - fast.score).abs() <= 1e-3);
        prop_assert_eq!((exact.x, exact.y), (x, y));
        prop_assert!(exact.score >= 0.999);
    }

    #[test]
    fn similarity_ignores_reference_scale(seed in 0u64..10_000, exp in -4i32..4, lambda in 0.01f64..100.0) {
        let mut r = rng(seed);
        let q = random_features(&mut r, 9, 8, 4);
        let f = random_features(&mut r, 10, 9, 4);
        let base = match_blocks(&q, &f).unwrap();
        // Power-of-two factors commute exactly with the normalization.
        let pow2 = match_blocks(&q, &f.scaled(2f64.powi(exp))).unwrap();
        prop_assert_eq!(&base, &pow2);
        let any = match_blocks(&q, &f.scaled(lambda)).unwrap();
        prop_assert_eq!(&base.correspondences, &any.correspondences);
        for (a, b) in base.similarity.iter().zip(&any.similarity) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_mean_distance_iff_all_blocks_stay(seed in 0u64..10_000, same in any::<bool>()) {
        let mut r = rng(seed);
        let q = random_features(&mut r, 8, 8, 3);
        let f = if same { q.scaled(3.0) } else { random_features(&mut r, 8, 8, 3) };
        let m = match_blocks(&q, &f).unwrap();
        let stays = (0..m.correspondences.len()).all(|g| m.correspondences[g] == m.query_center(g));
        prop_assert_eq!(m.mean_distance() == 0.0, stays);
        prop_assert!(m.distance.iter().all(|&d| d >= 0.0));
        if same {
            prop_assert!(stays);
        }
    }

    #[test]
    fn selection_contract(cands in candidates(), k in 1usize..5, d1 in 0.0f64..0.3, extra in 0.0f64..0.2, rot in 0usize..10) {
        let lo = SelectionConfig { delta: d1.max(1e-6), k };
        let hi = SelectionConfig { delta: d1.max(1e-6) + extra, k };
        let a = select(&cands, &lo).unwrap();
        let b = select(&cands, &hi).unwrap();
        prop_assert_eq!(a.refs.len(), k);
        prop_assert_eq!(b.refs.len(), k);
        let passing = |s: &selfx::selection::SelectedReferences<f64>| s.refs.len() - s.fill_count - s.padded;
        prop_assert!(passing(&b) >= passing(&a));
        let passed: Vec<f64> = a.refs.iter().take(passing(&a)).map(|r| r.1.mean_distance()).collect();
        prop_assert!(passed.iter().all(|&d| d <= lo.delta));
        let scales: Vec<f64> = a.refs.iter().take(passing(&a)).map(|r| r.0.scale).collect();
        prop_assert!(scales.windows(2).all(|w| w[0] >= w[1]));

        let mut shuffled = cands.clone();
        let n = shuffled.len();
        shuffled.rotate_left(rot % n);
        shuffled.reverse();
        prop_assert_eq!(select(&shuffled, &lo).unwrap(), a);
    }

    #[test]
    fn ransac_inliers_agree_with_the_model(seed in 0u64..10_000, noise_pts in 0usize..20) {
        let mut r = rng(seed);
        use rand::Rng;
        let truth = AffineParams::<f64>::similarity(r.random_range(-0.5..0.5), r.random_range(0.7..1.5), r.random_range(-5.0..5.0), r.random_range(-5.0..5.0));
        let mut pairs: Vec<([f64; 2], [f64; 2])> = Vec::new();
        for _ in 0..30 {
            let p = [r.random_range(0.0..20.0), r.random_range(0.0..20.0)];
            let (x, y) = truth.apply(p[0], p[1]);
            pairs.push(([x, y], p));
        }
        for _ in 0..noise_pts {
            pairs.push(([r.random_range(-10.0..30.0), r.random_range(-10.0..30.0)], [r.random_range(0.0..20.0), r.random_range(0.0..20.0)]));
        }
        let cfg = RansacConfig { seed, ..RansacConfig::default() };
        let fit = fit_affine_ransac(&pairs, &cfg).unwrap();
        prop_assert_eq!(&fit, &fit_affine_ransac(&pairs, &cfg).unwrap());
        let close = pairs.iter().filter(|(q, p)| {
            let (x, y) = fit.params.apply(p[0], p[1]);
            ((q[0] - x).powi(2) + (q[1] - y).powi(2)).sqrt() <= cfg.inlier_threshold
        }).count();
        prop_assert!(close as f64 >= fit.inlier_fraction() * pairs.len() as f64);

        let mut last = 0;
        for th in [0.5, 1.0, 1.5, 3.0, 6.0] {
            let c = fit_affine_ransac(&pairs, &RansacConfig { inlier_threshold: th, ..cfg.clone() }).unwrap().inlier_count();
            prop_assert!(c >= last, "threshold {} gave {} < {}", th, c, last);
            last = c;
        }
    }

    #[test]
    fn warp_keeps_constants(v in 0.0f64..1.0, angle in -1.0f64..1.0, s in 0.5f64..2.0, tx in -8.0f64..8.0, ty in -8.0f64..8.0) {
        let img = Frame::filled(24, 20, 3, v);
        let out = warp(&img, &AffineParams::similarity(angle, s, tx, ty)).unwrap();
        for (i, &m) in out.valid.data().iter().enumerate() {
            if m > 0.0 {
                for c in 0..3 {
                    prop_assert_eq!(out.image.data()[i * 3 + c], v);
                }
            }
        }
    }

    #[test]
    fn weights_partition_unity(seed in 0u64..10_000, k in 1usize..5, temp in 0.05f64..2.0) {
        use rand::Rng;
        let mut r = rng(seed);
        let sims: Vec<Frame<f64>> = (0..k).map(|_| Frame::from_fn(7, 5, 1, |_, _, _| r.random_range(-1.0..1.0))).collect();
        let valids: Vec<Frame<f64>> = (0..k).map(|_| Frame::from_fn(7, 5, 1, |_, _, _| if r.random_bool(0.7) { 1.0 } else { 0.0 })).collect();
        let dists: Vec<f64> = (0..k).map(|_| r.random_range(0.0..0.5)).collect();
        let inputs: Vec<WeightInput<f64>> = (0..k).map(|i| WeightInput { similarity: &sims[i], mean_distance: dists[i], valid: &valids[i] }).collect();
        let w = compute_weights(&inputs, temp).unwrap();
        for px in 0..35 {
            let any_valid = valids.iter().any(|v| v.data()[px] > 0.0);
            let total: f64 = w.weights.iter().map(|m| m.data()[px]).sum();
            if any_valid {
                prop_assert!((total - 1.0).abs() <= 1e-6);
                prop_assert_eq!(w.fallback.data()[px], 0.0);
            } else {
                prop_assert_eq!(total, 0.0);
                prop_assert_eq!(w.fallback.data()[px], 1.0);
            }
            for (m, v) in w.weights.iter().zip(&valids) {
                prop_assert!(m.data()[px] >= 0.0);
                if v.data()[px] == 0.0 {
                    prop_assert_eq!(m.data()[px], 0.0);
                }
            }
        }
    }

    #[test]
    fn fusion_is_linear(r1 in frame_strategy(6, 6, 3), r2 in frame_strategy(6, 6, 3), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let one = Frame::filled(6, 6, 1, 1.0);
        let wrap = |f: Frame<f64>| Warped { image: f, valid: one.clone() };
        let mixed = r1.zip_map(&r2, |x, y| a * x + b * y);
        let lhs = fuse_global(&[wrap(mixed)], std::slice::from_ref(&one)).unwrap();
        let f1 = fuse_global(&[wrap(r1)], std::slice::from_ref(&one)).unwrap();
        let f2 = fuse_global(&[wrap(r2)], std::slice::from_ref(&one)).unwrap();
        let rhs = f1.image.zip_map(&f2.image, |x, y| a * x + b * y);
        prop_assert!(max_abs_diff(&lhs.image, &rhs) <= 1e-6);
    }

    #[test]
    fn detail_transfer_keeps_low_band_on_smooth_content(seed in 0u64..10_000, cell in 12usize..33, alpha in 0.0f64..1.0, beta in 0.0f64..1.0) {
        let mut r = rng(seed);
        let smooth = |r: &mut _| resize_bicubic(&noise(r, 64usize.div_ceil(cell), 64usize.div_ceil(cell), 3), 64, 64).unwrap();
        let gt = smooth(&mut r);
        let lr = resample_bicubic(&gt, 0.25).unwrap();
        let fused = Warped { image: smooth(&mut r), valid: Frame::filled(64, 64, 1, 1.0) };
        let locals = vec![resample_bicubic(&smooth(&mut r), 0.25).unwrap()];
        let out = reconstruct_patch(&lr, Some(&fused), &locals, 4, TransferGains { alpha, beta }).unwrap();
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let base = resample_bicubic(&lr, 4.0).unwrap();
        let dev = max_abs_diff(&band_limit(&out, 4.0).unwrap(), &band_limit(&base, 4.0).unwrap());
        prop_assert!(dev <= 5e-2, "{}", dev);
    }

    #[test]
    fn reconstruction_stays_in_range(lr in frame_strategy(8, 8, 3), fused in frame_strategy(24, 24, 3), mask in frame_strategy(24, 24, 1), u in prop_oneof![Just(3usize)]) {
        let valid = mask.map(|v| if v > 0.5 { 1.0 } else { 0.0 });
        let out = reconstruct_patch(&lr, Some(&Warped { image: fused, valid }), std::slice::from_ref(&lr), u, TransferGains { alpha: 1.0, beta: 1.0 }).unwrap();
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn metric_symmetries(a in frame_strategy(16, 16, 1), b in frame_strategy(16, 16, 1), eps in 1e-4f64..1e-1) {
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() <= 1e-12);
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() <= 1e-12);
        prop_assert!((charbonnier(&a, &a, eps).unwrap() - eps).abs() <= 1e-15);
    }

    #[test]
    fn psnr_falls_as_noise_grows(gt in frame_strategy(16, 16, 1), pattern in frame_strategy(16, 16, 1), a1 in 0.01f64..0.1, grow in 1.05f64..2.0) {
        let gt = gt.map(|v| 0.3 + 0.4 * v);
        let noisy = |amp: f64| gt.zip_map(&pattern, |g, n| g + amp * (n - 0.5));
        prop_assume!(pattern.data().iter().any(|&n| n != 0.5));
        let p1 = psnr(&noisy(a1), &gt).unwrap();
        let p2 = psnr(&noisy(a1 * grow), &gt).unwrap();
        prop_assert!(p2 < p1);
        let c1 = charbonnier(&noisy(a1), &gt, 1e-3).unwrap();
        let c2 = charbonnier(&noisy(a1 * grow), &gt, 1e-3).unwrap();
        prop_assert!(c2 > c1);
    }

    #[test]
    fn report_aggregates_are_means(frames in proptest::collection::vec((frame_strategy(12, 12, 1), frame_strategy(12, 12, 1)), 1..5)) {
        let per: Vec<FrameMetrics> = frames.iter().enumerate().map(|(i, (p, g))| FrameMetrics::compute(i, p, g).unwrap()).collect();
        let report = MetricReport::from_frames(per.clone());
        let n = per.len() as f64;
        let mean = |f: fn(&FrameMetrics) -> f64| per.iter().map(f).sum::<f64>() / n;
        prop_assert!((report.psnr - mean(|m| m.psnr)).abs() < 1e-9);
        prop_assert!((report.ssim - mean(|m| m.ssim)).abs() < 1e-12);
        prop_assert!((report.charbonnier - mean(|m| m.charbonnier)).abs() < 1e-12);
    }
}
