mod common;

use common::{brute_force_loo, naive_convolve, random_problem, ridge_oracle, to_dmatrix};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use srocket::classifier::{self, default_alpha_grid};
use srocket::transform::{convolve, init_kernel_bank, ppv, transform_dataset, Kernel};
use srocket::data::TimeSeries;

fn kernel_strategy() -> impl Strategy<Value = (Vec<f64>, Kernel)> {
    (prop::sample::select(vec![7usize, 9, 11]), 1usize..=8, any::<bool>(), 1usize..=64)
        .prop_flat_map(|(len, dilation, padding, n)| {
            (
                prop::collection::vec(-3.0f64..3.0, n),
                prop::collection::vec(-2.0f64..2.0, len),
                -1.0f64..1.0,
                Just(dilation),
                Just(padding),
            )
        })
        .prop_map(|(x, weights, bias, dilation, padding)| {
            (
                x,
                Kernel {
                    weights,
                    bias,
                    dilation,
                    padding,
                },
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn convolution_matches_direct_evaluation((x, k) in kernel_strategy()) {
        let expect = naive_convolve(&x, &k.weights, k.bias, k.dilation, k.padding);
        match convolve(&x, &k) {
            Ok(got) => {
                prop_assert_eq!(got.len(), expect.len());
                for (a, b) in got.iter().zip(&expect) {
                    prop_assert!((a - b).abs() <= 1e-9);
                }
                if k.padding {
                    // odd length kernels give an exact half span
                    prop_assert_eq!(got.len(), x.len());
                }
            }
            Err(_) => prop_assert!(expect.is_empty()),
        }
    }

    #[test]
    fn transform_cells_are_ppv_of_convolution(seed in any::<u64>(), n in 11usize..40) {
        let bank = init_kernel_bank(12, n, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let series: Vec<TimeSeries> = (0..3)
            .map(|i| TimeSeries::new((0..n).map(|_| rand::Rng::random::<f64>(&mut rng) - 0.5).collect(), i))
            .collect();
        let f = transform_dataset(&series, &bank).unwrap();
        for (i, s) in series.iter().enumerate() {
            for (j, k) in bank.kernels.iter().enumerate() {
                let out = naive_convolve(&s.values, &k.weights, k.bias, k.dilation, k.padding);
                let pos = out.iter().filter(|&&v| v > 0.0).count() as f64 / out.len() as f64;
                prop_assert_eq!(f.get(i, j), pos);
                prop_assert_eq!(f.get(i, j), ppv(&out).unwrap());
            }
        }
    }
}

fn check_ridge_against_oracle(seed: u64, n: usize, d: usize, classes: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x, labels) = random_problem(&mut rng, n, d, classes);
    let model = classifier::fit(&x, &labels, &default_alpha_grid()).unwrap();
    let oracle = ridge_oracle(&to_dmatrix(&x), &labels, model.alpha);
    for j in 0..d {
        for c in 0..model.num_classes {
            let (a, b) = (model.weight(j, c), oracle.weights[(j, c)]);
            assert!((a - b).abs() <= 1e-8, "n={n} d={d} w[{j},{c}] {a} vs {b}");
        }
    }
    for (a, b) in model.intercepts.iter().zip(&oracle.intercepts) {
        assert!((a - b).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn ridge_matches_normal_equations(seed in any::<u64>(), n in 4usize..=30, d in 1usize..=30, classes in 2usize..=4) {
        check_ridge_against_oracle(seed, n, d, classes);
    }
}

#[test]
fn ridge_matches_in_both_regimes() {
    check_ridge_against_oracle(1, 10, 30, 2);
    check_ridge_against_oracle(2, 30, 10, 3);
    check_ridge_against_oracle(3, 20, 20, 2);
}

#[test]
fn loo_errors_match_refitting_each_fold() {
    for (seed, n, d) in [(5u64, 12usize, 25usize), (6, 25, 6), (7, 15, 15)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, labels) = random_problem(&mut rng, n, d, 3);
        let grid = default_alpha_grid();
        let model = classifier::fit(&x, &labels, &grid).unwrap();
        let xm = to_dmatrix(&x);
        let mut best = (f64::INFINITY, 0.0);
        for &(alpha, err) in &model.loo_errors {
            let brute = brute_force_loo(&xm, &labels, alpha);
            // near-interpolating folds at small alpha are ill-conditioned
            assert!((err - brute).abs() <= 1e-6 * brute.max(1.0), "alpha {alpha}: {err} vs {brute}");
            if brute < best.0 {
                best = (brute, alpha);
            }
        }
        assert_eq!(model.alpha, best.1);
    }
}

#[test]
fn weight_norm_shrinks_with_alpha() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (n, d) in [(20, 40), (40, 10)] {
        let (x, labels) = random_problem(&mut rng, n, d, 2);
        let norms: Vec<f64> = default_alpha_grid()
            .iter()
            .map(|&a| classifier::fit(&x, &labels, &[a]).unwrap().weight_norm())
            .collect();
        assert!(norms.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{norms:?}");
    }
}
