mod common;

use common::*;
use selfx::frames::{band_limit, cubic_kernel, make_grid, resample_bicubic, resize_bicubic, splice, Frame};
use selfx::retrieval::{retrieve_global, retrieve_local, template_match, FrameStore, SearchConfig};

#[test]
fn upsampling_matches_direct_kernel_evaluation() {
    let ramp = Frame::from_fn(8, 8, 1, |x, y, _| (x as f64 + 2.0 * y as f64) / 21.0);
    let out = resample_bicubic(&ramp, 2.0).unwrap();
    assert_eq!(out.dims(), (16, 16));
    let axis = |i: usize| -> Vec<(usize, f64)> {
        let c = (i as f64 + 0.5) / 2.0 - 0.5;
        let base = c.floor() as isize;
        (base - 1..=base + 2)
            .map(|j| (j.clamp(0, 7) as usize, cubic_kernel(c - j as f64)))
            .collect()
    };
    for y in 0..16 {
        for x in 0..16 {
            let mut v = 0.0;
            for &(jy, wy) in &axis(y) {
                for &(jx, wx) in &axis(x) {
                    v += wx * wy * ramp.get(jx, jy, 0);
                }
            }
            let v = v.clamp(0.0, 1.0);
            assert!(
                (out.get(x, y, 0) - v).abs() < 1e-4,
                "({x},{y}): {} vs {v}",
                out.get(x, y, 0)
            );
        }
    }
}

#[test]
fn band_limit_is_down_then_up() {
    let img = texture(&mut rng(1), 61, 47, 3);
    let down = resample_bicubic(&img, 0.5).unwrap();
    let expected = resize_bicubic(&down, 61, 47).unwrap();
    assert_eq!(band_limit(&img, 2.0).unwrap(), expected);
}

#[test]
fn band_limit_lowers_checkerboard_variance() {
    let board = Frame::from_fn(64, 64, 1, |x, y, _| ((x + y) % 2) as f32);
    let out = band_limit(&board, 4.0).unwrap();
    assert!(out.channel_variances()[0] < board.channel_variances()[0]);
}

#[test]
fn grid_enumeration_and_hd_coverage() {
    let g = make_grid(64, 64, 32, 24).unwrap();
    let mut xs: Vec<usize> = g.origins.iter().map(|o| o.0).collect();
    xs.sort();
    xs.dedup();
    assert_eq!(xs, vec![0, 24, 32]);
    assert_eq!(g.n(), 9);

    let (w, h) = (1920, 1080);
    let g = make_grid(w, h, 32, 24).unwrap();
    let mut covered = vec![false; w * h];
    for &(ox, oy) in &g.origins {
        assert!(ox + 32 <= w && oy + 32 <= h);
        for y in oy..oy + 32 {
            covered[y * w + ox..y * w + ox + 32].fill(true);
        }
    }
    assert!(covered.iter().all(|&c| c));
}

#[test]
fn hann_blend_of_two_constants_is_monotone() {
    let zero = Frame::<f64>::filled(32, 32, 1, 0.0);
    let one = Frame::<f64>::filled(32, 32, 1, 1.0);
    let out = splice(&[((0, 0), zero), ((16, 0), one)], 48, 32).unwrap();
    for y in 0..32 {
        let row: Vec<f64> = (0..48).map(|x| out.get(x, y, 0)).collect();
        assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(row.windows(2).all(|p| p[1] >= p[0] - 1e-12), "{row:?}");
        assert_eq!(row[0], 0.0);
        assert_eq!(row[47], 1.0);
        assert!(row[16] < 0.5 && row[31] > 0.5);
    }
}

#[test]
fn template_match_equals_brute_force() {
    let mut r = rng(2);
    for _ in 0..5 {
        let target = noise(&mut r, 64, 64, 1);
        let query = noise(&mut r, 16, 16, 1);
        let hit = template_match(&query, &target).unwrap();
        let (x, y, s) = brute_template_match(&query, &target);
        assert_eq!((hit.x, hit.y), (x, y));
        assert!((hit.score - s).abs() < 1e-9, "{} vs {s}", hit.score);
    }
}

#[test]
fn template_match_self_and_constant() {
    let target = texture(&mut rng(3), 96, 64, 1);
    let query = target.crop(40, 16, 24, 24).unwrap();
    let hit = template_match(&query, &target).unwrap();
    assert_eq!((hit.x, hit.y), (40, 16));
    assert!(hit.score >= 0.999);

    let flat = Frame::<f64>::filled(40, 40, 1, 0.5);
    let hit = template_match(&query, &flat).unwrap();
    assert_eq!((hit.x, hit.y, hit.score), (0, 0, 0.0));
}

#[test]
fn planted_larger_copy_is_retrieved() {
    let mut r = rng(4);
    let frames: Vec<Frame<f64>> = (0..12).map(|_| texture(&mut r, 128, 128, 1)).collect();
    let (t, origin, scale) = (0, (16, 16), 2.1);
    let up = resample_bicubic(&frames[t], scale).unwrap();
    let size = 67; // round(32 · 2.1)
    let (qx, qy) = (34, 34); // round(16 · 2.1)
    let patch = up.crop(qx, qy, size, size).unwrap();
    let mut frames = frames;
    let (px, py) = (50, 40);
    for y in 0..size {
        for x in 0..size {
            frames[t + 10].set(px + x, py + y, 0, patch.get(x, y, 0));
        }
    }
    let store = FrameStore::new(frames).unwrap();
    let g = retrieve_global(&store, t, origin, &SearchConfig::default()).unwrap();
    assert_eq!(g.candidates.len(), 7);
    let c = g.candidates.iter().find(|c| c.scale == scale).unwrap();
    assert_eq!(c.source_frame, t + 10);
    assert!(
        c.location.0.abs_diff(px) <= 1 && c.location.1.abs_diff(py) <= 1,
        "{c:?}"
    );
    assert!(c.score >= 0.95, "{}", c.score);
    for other in g.candidates.iter().filter(|o| o.scale != scale) {
        assert!(c.score > other.score, "{} vs {other:?}", c.score);
    }
}

#[test]
fn local_search_follows_uniform_translation() {
    let base = texture(&mut rng(5), 200, 80, 1);
    // Content drifts 5 px left per frame.
    let frames: Vec<Frame<f64>> = (0..4).map(|t| base.crop(5 * t, 0, 160, 80).unwrap()).collect();
    let store = FrameStore::new(frames).unwrap();
    let cfg = SearchConfig {
        local_count: 4,
        ..SearchConfig::default()
    };
    let origin = (64, 24);
    let found = retrieve_local(&store, 1, origin, &cfg).unwrap();
    let next = found.iter().find(|c| c.source_frame == 2).unwrap();
    assert!(next.location.0.abs_diff(origin.0 - 5) <= 1 && next.location.1.abs_diff(origin.1) <= 1);
    let prev = found.iter().find(|c| c.source_frame == 0).unwrap();
    assert_eq!(prev.location, (origin.0 + 5, origin.1));
}
