use nalgebra::DMatrix;
use neuroquansa::boltzmann::{dkl, exact_joint, exact_marginal, gibbs_sample, RbmParams};
use neuroquansa::rng;
use proptest::prelude::*;
use rand::Rng;

fn random_params(n: usize, nh: usize, seed: u64, scale: f64) -> RbmParams {
    let mut r = rng::stream(seed, 1);
    let mut draw = |_: usize| r.random_range(-scale..scale);
    let w = DMatrix::from_fn(n, nh, |_, _| draw(0));
    let bv = (0..n).map(&mut draw).collect();
    let bh = (0..nh).map(&mut draw).collect();
    RbmParams::new(w, bv, bh).unwrap()
}

/// Direct double sum of `exp(vᵀWh + b_v·v + b_h·h)`.
fn brute_force_marginal(p: &RbmParams) -> Vec<f64> {
    let (n, nh) = (p.n_visible(), p.n_hidden());
    let bit = |x: usize, i: usize| ((x >> i) & 1) as f64;
    let mut out: Vec<f64> = (0..1usize << n)
        .map(|v| {
            (0..1usize << nh)
                .map(|h| {
                    let mut e = 0.0;
                    for i in 0..n {
                        e += p.visible_bias[i] * bit(v, i);
                        for j in 0..nh {
                            e += p.weights[(i, j)] * bit(v, i) * bit(h, j);
                        }
                    }
                    for j in 0..nh {
                        e += p.hidden_bias[j] * bit(h, j);
                    }
                    e.exp()
                })
                .sum()
        })
        .collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= z);
    out
}

#[test]
fn gibbs_error_falls_like_one_over_n() {
    let params = random_params(3, 2, 7, 1.0);
    let exact = exact_marginal(&params).unwrap().probabilities;
    let sizes = [1_000usize, 4_000, 16_000, 64_000];
    let points: Vec<(f64, f64)> = sizes
        .iter()
        .map(|&n| {
            let mean = (0..20)
                .map(|s| {
                    let emp = gibbs_sample(&params, n, 1000, 1, 100 + s).unwrap().probabilities();
                    dkl(&emp, &exact).unwrap()
                })
                .sum::<f64>()
                / 20.0;
            ((n as f64).ln(), mean.ln())
        })
        .collect();
    let mx = points.iter().map(|p| p.0).sum::<f64>() / 4.0;
    let my = points.iter().map(|p| p.1).sum::<f64>() / 4.0;
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope + 1.0).abs() < 0.2, "slope {slope}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn marginal_matches_double_enumeration(n in 1usize..=4, nh in 1usize..=3, seed in any::<u64>(), scale in 0.1f64..3.0) {
        let params = random_params(n, nh, seed, scale);
        let exact = exact_marginal(&params).unwrap().probabilities;
        prop_assert!((exact.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in exact.iter().zip(brute_force_marginal(&params)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hidden_units_factorize_given_visible(n in 1usize..=3, nh in 2usize..=3, seed in any::<u64>()) {
        let params = random_params(n, nh, seed, 2.0);
        let joint = exact_joint(&params).unwrap();
        let dv = 1usize << n;
        for v in 0..dv {
            let pv: f64 = (0..1usize << nh).map(|h| joint[v | (h << n)]).sum();
            let cond = |h: usize| joint[v | (h << n)] / pv;
            let on: Vec<f64> = (0..nh)
                .map(|j| (0..1usize << nh).filter(|h| (h >> j) & 1 == 1).map(cond).sum())
                .collect();
            for h in 0..1usize << nh {
                let product: f64 = (0..nh).map(|j| if (h >> j) & 1 == 1 { on[j] } else { 1.0 - on[j] }).product();
                prop_assert!((cond(h) - product).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn divergence_is_nonnegative_and_zero_only_on_equality(
        p in prop::collection::vec(0.01f64..1.0, 8),
        q in prop::collection::vec(0.01f64..1.0, 8),
    ) {
        let d = dkl(&p, &q).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert!(dkl(&p, &p).unwrap() < 1e-14);
        let sum_p: f64 = p.iter().sum();
        let sum_q: f64 = q.iter().sum();
        let same = p.iter().zip(&q).all(|(a, b)| (a / sum_p - b / sum_q).abs() < 1e-9);
        prop_assert!(same || d > 0.0);
    }
}
