mod common;

use dvcprep_core::saliency::{
    apply_weights_raw, combine_weights, compute_weights_for, event_weight_matrix, ReweightConfig, SaliencyWeights,
    WeightDesign,
};
use dvcprep_core::feature_io::{Event, EventSet};
use proptest::prelude::*;

fn design() -> impl Strategy<Value = WeightDesign> {
    prop::sample::select(WeightDesign::ALL.to_vec())
}

/// Events as fractions of the duration, at least 1e-3 long.
fn event_set() -> impl Strategy<Value = EventSet> {
    (1.0f64..1000.0, prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..5)).prop_map(|(d, evs)| {
        let events = evs
            .into_iter()
            .map(|(a, b)| {
                let (s, e) = if a < b { (a, b) } else { (b, a) };
                let e = e.max(s + 1e-3).min(1.0);
                let s = s.min(e - 1e-3);
                Event::new(s * d, e * d, "")
            })
            .collect();
        EventSet::new("v", d, events).unwrap()
    })
}

proptest! {
    #[test]
    fn weights_lie_in_unit_interval(
        events in event_set(),
        frames in 1usize..300,
        alpha in 0.01f64..1e4,
        design in design(),
        seed in any::<u64>(),
    ) {
        let cfg = ReweightConfig { alpha, design, rng_seed: seed };
        let w = compute_weights_for(frames, &events, &cfg).unwrap();
        prop_assert_eq!(w.len(), frames);
        prop_assert!(w.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn combined_weight_dominates_each_event(
        events in event_set(),
        frames in 1usize..200,
        alpha in 0.1f64..100.0,
        design in design(),
    ) {
        let cfg = ReweightConfig { alpha, design, rng_seed: 3 };
        let per = event_weight_matrix(frames, &events, &cfg).unwrap();
        let w = combine_weights(&per).unwrap();
        for row in &per {
            for (c, r) in w.as_slice().iter().zip(row) {
                prop_assert!(c >= r);
            }
        }
        prop_assert!(w.as_slice().iter().enumerate().all(|(i, c)| per.iter().any(|row| row[i] == *c)));
    }

    #[test]
    fn sharp_sigmoid_approaches_binary(frames in 2usize..300, s in 0.0f64..1.0, e in 0.0f64..1.0) {
        let (s, e) = if s < e { (s, e) } else { (e, s) };
        prop_assume!(e - s > 1e-3);
        let events = EventSet::new("v", 100.0, vec![Event::new(s * 100.0, e * 100.0, "")]).unwrap();
        let cfg = ReweightConfig { alpha: 1e4, design: WeightDesign::SigmoidCenter, rng_seed: 0 };
        let w = compute_weights_for(frames, &events, &cfg).unwrap();
        let t = frames as f64;
        for i in 1..=frames {
            let p = i as f64 / t;
            if p >= s + 1.0 / t && p <= e - 1.0 / t {
                prop_assert!((w.as_slice()[i - 1] - 1.0).abs() <= 1e-3);
            }
            if p <= s - 1.0 / t || p >= e + 1.0 / t {
                prop_assert!(w.as_slice()[i - 1] <= 1e-3);
            }
        }
    }

    #[test]
    fn single_event_sigmoid_is_unimodal(
        frames in 1usize..400,
        s in 0.0f64..1.0,
        e in 0.0f64..1.0,
        alpha in 0.1f64..200.0,
    ) {
        let (s, e) = if s < e { (s, e) } else { (e, s) };
        prop_assume!(e - s > 1e-3);
        let events = EventSet::new("v", 1.0, vec![Event::new(s, e, "")]).unwrap();
        let cfg = ReweightConfig { alpha, design: WeightDesign::SigmoidCenter, rng_seed: 0 };
        let w = compute_weights_for(frames, &events, &cfg).unwrap();
        let peak = w.argmax().unwrap();
        let v = w.as_slice();
        // Two rounded sigmoid factors can wobble by an ulp on the plateau.
        let slack = |x: f64| 4.0 * f64::EPSILON * x;
        prop_assert!(v[..=peak].windows(2).all(|p| p[1] >= p[0] - slack(p[0])), "rising side {:?}", &v[..=peak]);
        prop_assert!(v[peak..].windows(2).all(|p| p[1] <= p[0] + slack(p[0])), "falling side {:?}", &v[peak..]);
    }

    #[test]
    fn grid_aligned_event_is_symmetric(
        frames in 4usize..300,
        center_frac in 0.0f64..1.0,
        half in 0.1f64..50.0,
        alpha in 0.1f64..100.0,
    ) {
        // Duration T seconds puts frame i at i/T and second c at c/T.
        let t = frames as f64;
        let c = ((center_frac * t).round() as usize).clamp(1, frames - 1);
        let half = half.min(c as f64).min(t - c as f64);
        prop_assume!(half > 1e-3);
        let events = EventSet::new("v", t, vec![Event::new(c as f64 - half, c as f64 + half, "")]).unwrap();
        let cfg = ReweightConfig { alpha, design: WeightDesign::SigmoidCenter, rng_seed: 0 };
        let w = compute_weights_for(frames, &events, &cfg).unwrap();
        let v = w.as_slice();
        for j in 1..c.min(frames - c) {
            prop_assert!((v[c - 1 + j] - v[c - 1 - j]).abs() <= 1e-9);
        }
    }

    #[test]
    fn reweighting_commutes_with_scaling(
        rows in prop::collection::vec(prop::collection::vec(-10.0f32..10.0, 4), 1..20),
        weights in prop::collection::vec(0.0f64..=1.0, 20),
        exp in -8i32..8,
        c in 0.01f32..100.0,
    ) {
        let flat: Vec<f32> = rows.concat();
        let w = SaliencyWeights::new(weights[..rows.len()].to_vec()).unwrap();
        let base = apply_weights_raw(&flat, 4, &w).unwrap();

        // Powers of two scale exactly.
        let p = 2f32.powi(exp);
        let scaled: Vec<f32> = flat.iter().map(|x| x * p).collect();
        let out = apply_weights_raw(&scaled, 4, &w).unwrap();
        for (a, b) in out.iter().zip(&base) {
            prop_assert_eq!(*a, b * p);
        }

        let scaled: Vec<f32> = flat.iter().map(|x| x * c).collect();
        let out = apply_weights_raw(&scaled, 4, &w).unwrap();
        for (a, b) in out.iter().zip(&base) {
            let want = b * c;
            prop_assert!((a - want).abs() <= 4.0 * f32::EPSILON * want.abs().max(f32::MIN_POSITIVE));
        }
    }

    #[test]
    fn weights_are_deterministic(events in event_set(), frames in 1usize..100, design in design(), seed in any::<u64>()) {
        let cfg = ReweightConfig { alpha: 10.0, design, rng_seed: seed };
        let a = compute_weights_for(frames, &events, &cfg).unwrap();
        let b = compute_weights_for(frames, &events, &cfg).unwrap();
        prop_assert!(a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn random_skew_stays_in_range_over_many_seeds() {
    let events = EventSet::new(
        "clip",
        120.0,
        vec![Event::new(3.0, 40.0, ""), Event::new(35.0, 90.0, ""), Event::new(100.0, 120.0, "")],
    )
    .unwrap();
    for seed in 0..1000 {
        let cfg = ReweightConfig {
            alpha: 10.0,
            design: WeightDesign::RandomSkew,
            rng_seed: seed,
        };
        let w = compute_weights_for(100, &events, &cfg).unwrap();
        assert!(w.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)), "seed {seed}");
    }
}
