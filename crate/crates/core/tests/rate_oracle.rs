mod common;

use common::{fenchel_grid_sup, heisenberg_rate_isotropic_half};
use nilwalk::rate_functions::{
    develop, endpoint_rate, limit_rate, path_rate, PiecewisePath, QuadraticForms, RateOptions,
};
use nilwalk::{GroupLaw, StratifiedAlgebra};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn opts(knots: usize, restarts: usize) -> RateOptions {
    RateOptions {
        knots,
        restarts,
        ..RateOptions::default()
    }
}

fn heisenberg_targets() -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut out = vec![[0.0, 0.0, 0.5], [1.0, 0.0, 0.3]];
    for _ in 0..4 {
        out.push([
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ]);
    }
    out
}

#[test]
fn heisenberg_bounds_bracket_the_closed_form() {
    let alg = StratifiedAlgebra::heisenberg();
    let forms = QuadraticForms::isotropic(2, 0.5).unwrap();
    for g in heisenberg_targets() {
        let exact = heisenberg_rate_isotropic_half(g);
        let mut prev = f64::INFINITY;
        for k in [4, 8, 16] {
            let b = endpoint_rate(&alg, &forms, &alg.element(g.to_vec()).unwrap(), &opts(k, 4)).unwrap();
            assert!(b.constraint_violation <= 1e-8, "{g:?} K={k}: {}", b.constraint_violation);
            assert!(b.value >= exact - 1e-9, "{g:?} K={k}: {} below {exact}", b.value);
            let slack = 6.0 / (k * k) as f64;
            assert!(b.value <= exact * (1.0 + slack), "{g:?} K={k}: {} vs {exact}", b.value);
            assert!(b.value <= prev + 1e-9, "{g:?}: K={k} bound {} exceeds {prev}", b.value);
            prev = b.value;
        }
    }
}

#[test]
fn minimizing_path_develops_onto_the_target() {
    let alg = StratifiedAlgebra::heisenberg();
    let forms = QuadraticForms::isotropic(2, 0.5).unwrap();
    let g = alg.element(vec![0.3, -0.2, 0.4]).unwrap();
    let b = endpoint_rate(&alg, &forms, &g, &opts(8, 2)).unwrap();
    let path = b.path().unwrap();
    assert!(develop(&alg, &path, GroupLaw::Original).unwrap().max_abs_diff(&g) <= 1e-8);
    assert!((path_rate(&forms, &path).unwrap() - b.value).abs() <= 1e-12 * b.value.max(1.0));
}

#[test]
fn limit_and_original_laws_agree_in_step_two() {
    let alg = StratifiedAlgebra::heisenberg();
    let forms = QuadraticForms::isotropic(2, 0.7).unwrap();
    for g in heisenberg_targets() {
        let g = alg.element(g.to_vec()).unwrap();
        let a = endpoint_rate(&alg, &forms, &g, &opts(6, 2)).unwrap();
        let b = limit_rate(&alg, &forms, &g, &opts(6, 2)).unwrap();
        assert!((a.value - b.value).abs() <= 1e-10, "{} vs {}", a.value, b.value);
    }
}

#[test]
fn abelian_rate_is_the_quadratic_form() {
    let alg = StratifiedAlgebra::abelian(2).unwrap();
    let sigma = nalgebra::DMatrix::from_row_slice(2, 2, &[1.3, 0.4, 0.4, 0.7]);
    let forms = QuadraticForms::new(sigma).unwrap();
    let v = [0.8, -1.1];
    let b = endpoint_rate(&alg, &forms, &alg.horizontal(&v).unwrap(), &opts(4, 2)).unwrap();
    let want = forms.alpha_star(&v).unwrap();
    assert!((b.value - want).abs() <= 1e-9 * want);
}

#[test]
fn fenchel_oracle_on_a_few_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let (a, c) = (rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0));
        let b = rng.gen_range(-0.4..0.4) * (a * c as f64).sqrt();
        let forms = QuadraticForms::new(nalgebra::DMatrix::from_row_slice(2, 2, &[a, b, b, c])).unwrap();
        let lam = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let want = fenchel_grid_sup([[a, b], [b, c]], lam);
        assert!((forms.alpha_star(&lam).unwrap() - want).abs() <= 1e-5);
    }
}

fn form_strategy() -> impl Strategy<Value = QuadraticForms> {
    (0.3f64..3.0, 0.3f64..3.0, -0.9f64..0.9).prop_map(|(a, c, r)| {
        let b = r * (a * c).sqrt();
        QuadraticForms::new(nalgebra::DMatrix::from_row_slice(2, 2, &[a, b, b, c])).unwrap()
    })
}

fn path_strategy() -> impl Strategy<Value = PiecewisePath> {
    prop::collection::vec((0.01f64..1.0, -2.0f64..2.0, -2.0f64..2.0), 1..8).prop_map(|segs| {
        let total: f64 = segs.iter().map(|s| s.0).sum();
        let mut t = 0.0;
        let mut h = vec![0.0, 0.0];
        let mut knots = vec![0.0];
        let mut values = vec![h.clone()];
        for (i, (dt, x, y)) in segs.iter().enumerate() {
            t = if i + 1 == segs.len() { 1.0 } else { t + dt / total };
            h = vec![h[0] + x, h[1] + y];
            knots.push(t);
            values.push(h.clone());
        }
        PiecewisePath::new(knots, values).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn path_rate_dominates_endpoint_form(forms in form_strategy(), h in path_strategy()) {
        let lower = forms.alpha_star(h.end()).unwrap();
        prop_assert!(path_rate(&forms, &h).unwrap() >= lower * (1.0 - 1e-12) - 1e-12);
    }

    #[test]
    fn knot_insertion_preserves_rate_and_development(
        forms in form_strategy(),
        h in path_strategy(),
        t in 0.001f64..0.999,
    ) {
        let alg = StratifiedAlgebra::heisenberg();
        let refined = h.insert_knot(t).unwrap();
        let (a, b) = (path_rate(&forms, &h).unwrap(), path_rate(&forms, &refined).unwrap());
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
        let ga = develop(&alg, &h, GroupLaw::Original).unwrap();
        let gb = develop(&alg, &refined, GroupLaw::Original).unwrap();
        prop_assert!(ga.max_abs_diff(&gb) <= 1e-10);
    }
}
