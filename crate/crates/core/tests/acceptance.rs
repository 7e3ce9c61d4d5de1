//! Acceptance gate: one PASS/FAIL line per criterion, run sequentially so the
//! wall-clock limits are measured without competing tests.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use common::{fenchel_grid_sup, unipotent_exp, unipotent_log, unipotent_mul};
use nilwalk::albanese::{albanese, clt_covariance_oracle};
use nilwalk::experiments::{
    run_albanese, run_clt, run_lil, run_lln, run_mdp, run_rate, ExperimentConfig, RunOutput,
};
use nilwalk::quotient_graph::{
    heisenberg_cayley, hexagonal, z1_biased, z1_subdivided, zd_lattice, VoltageGraph,
};
use nilwalk::rate_functions::{endpoint_rate, QuadraticForms, RateOptions};
use nilwalk::StratifiedAlgebra;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

struct Outcome {
    pass: bool,
    detail: String,
}

fn config(v: Value) -> ExperimentConfig {
    ExperimentConfig::from_json(&v.to_string(), Path::new(".")).unwrap()
}

fn max_dev(got: &[Vec<f64>], want: &[&[f64]]) -> f64 {
    got.iter()
        .zip(want)
        .flat_map(|(g, w)| g.iter().zip(w.iter()).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}

/// 1. Albanese exactness on three presets, each under 1 s.
fn albanese_exactness() -> Outcome {
    let cases: [(Value, &[f64], &[&[f64]]); 3] = [
        (json!({"preset": "zd_lattice", "params": {"d": 2}}), &[0.0, 0.0], &[&[0.5, 0.0], &[0.0, 0.5]]),
        (json!({"preset": "z1_biased", "params": {"q": 0.75}}), &[0.5], &[&[0.75]]),
        (json!({"preset": "z1_subdivided"}), &[0.0], &[&[0.25]]),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (graph, rho, sigma) in cases {
        let t = Instant::now();
        let out = run_albanese(&config(json!({ "graph": graph }))).unwrap();
        let elapsed = t.elapsed();
        let got_rho: Vec<f64> = serde_json::from_value(out.metrics["rho"].clone()).unwrap();
        let got_sigma: Vec<Vec<f64>> = serde_json::from_value(out.metrics["sigma"].clone()).unwrap();
        let err = max_dev(&[got_rho], &[rho]).max(max_dev(&got_sigma, sigma));
        pass &= err <= 1e-12 && elapsed < Duration::from_secs(1);
        parts.push(format!("{} err {err:.1e} in {elapsed:.2?}", graph["preset"]));
    }
    Outcome { pass, detail: format!("{} (tol 1e-12, < 1 s each)", parts.join("; ")) }
}

fn five_presets() -> Vec<(&'static str, VoltageGraph)> {
    vec![
        ("zd_lattice(2)", zd_lattice(2).unwrap()),
        ("z1_biased(0.75)", z1_biased(0.75).unwrap()),
        ("hexagonal", hexagonal()),
        ("heisenberg_cayley", heisenberg_cayley()),
        ("z1_subdivided", z1_subdivided()),
    ]
}

/// 2. Harmonic-realization residual on all five presets.
fn harmonicity() -> Outcome {
    let t = Instant::now();
    let worst = five_presets()
        .iter()
        .map(|(_, g)| albanese(g).unwrap().residual)
        .fold(0.0, f64::max);
    let elapsed = t.elapsed();
    Outcome {
        pass: worst <= 1e-10 && elapsed < Duration::from_secs(1),
        detail: format!("max residual {worst:.1e} over 5 presets in {elapsed:.2?} (tol 1e-10, < 1 s)"),
    }
}

/// 3. BCH against 3×3 unipotent matrices, dilation identities.
fn group_arithmetic() -> Outcome {
    let t = Instant::now();
    let alg = StratifiedAlgebra::heisenberg();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bch_err: f64 = 0.0;
    let mut dil_err: f64 = 0.0;
    for _ in 0..1000 {
        let a: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
        let b: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
        let (ga, gb) = (alg.element(a.to_vec()).unwrap(), alg.element(b.to_vec()).unwrap());
        let got = alg.bch_product(&ga, &gb).unwrap();
        let want = unipotent_log(unipotent_mul(unipotent_exp(a), unipotent_exp(b)));
        for (g, w) in got.coords().iter().zip(want) {
            bch_err = bch_err.max((g - w).abs());
        }
        let (e, d) = (rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0));
        let hom = alg.dilate_tau(e, &got).unwrap().max_abs_diff(
            &alg.limit_product(&alg.dilate_tau(e, &ga).unwrap(), &alg.dilate_tau(e, &gb).unwrap())
                .unwrap(),
        );
        let semi = alg
            .dilate_tau(e, &alg.dilate_tau(d, &ga).unwrap())
            .unwrap()
            .max_abs_diff(&alg.dilate_tau(e * d, &ga).unwrap());
        dil_err = dil_err.max(hom).max(semi);
    }
    let elapsed = t.elapsed();
    Outcome {
        pass: bch_err <= 1e-12 && dil_err <= 1e-12 && elapsed < Duration::from_secs(1),
        detail: format!(
            "BCH err {bch_err:.1e}, dilation err {dil_err:.1e} on 1000 pairs in {elapsed:.2?} (tol 1e-12, < 1 s)"
        ),
    }
}

/// 4. Monte Carlo covariance at N = S = 10⁴ against Σ.
fn clt_covariance() -> Outcome {
    let t = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, g) in [
        ("zd_lattice(2)", zd_lattice(2).unwrap()),
        ("z1_biased(0.75)", z1_biased(0.75).unwrap()),
        ("heisenberg_cayley", heisenberg_cayley()),
    ] {
        let data = albanese(&g).unwrap();
        let est = clt_covariance_oracle(&g, &data.harmonic, &data.rho, 10_000, 10_000, 2024, 0).unwrap();
        let mut worst: f64 = 0.0;
        for (i, r) in est.estimate.iter().enumerate() {
            for (j, x) in r.iter().enumerate() {
                worst = worst.max((x - data.sigma[i][j]).abs() / est.standard_error[i][j]);
            }
        }
        pass &= worst <= 3.0;
        parts.push(format!("{name} max |z| {worst:.2}"));
    }
    let elapsed = t.elapsed();
    pass &= elapsed < Duration::from_secs(60);
    Outcome { pass, detail: format!("{} in {elapsed:.2?} (3 SE, < 60 s)", parts.join("; ")) }
}

fn mdp_cells(out: &RunOutput) -> Vec<(u64, f64, f64)> {
    out.metrics["cells"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| {
            (
                c["n"].as_u64().unwrap(),
                c["delta"].as_f64().unwrap(),
                c["r_n"].as_f64().unwrap_or(f64::NEG_INFINITY),
            )
        })
        .collect()
}

/// 5. Exact moderate-deviation decay on ℤ and ℤ².
fn mdp_decay() -> Outcome {
    let t = Instant::now();
    let z1 = run_mdp(&config(json!({
        "graph": {"preset": "z1_srw"},
        "scaling": {"kind": "power", "theta": 0.75},
        "n_grid": [100, 1000, 10000], "delta": [1.0]
    })))
    .unwrap();
    let r1: Vec<f64> = mdp_cells(&z1).iter().map(|c| c.2).collect();
    let dev: Vec<f64> = r1.iter().map(|r| (r + 0.5).abs()).collect();
    let z1_ok = dev[2] <= 0.05 && dev.windows(2).all(|w| w[1] < w[0]);
    let z2 = run_mdp(&config(json!({
        "graph": {"preset": "zd_lattice", "params": {"d": 2}},
        "scaling": {"kind": "power", "theta": 0.75},
        "n_grid": [10000], "delta": [1.0, 2.0]
    })))
    .unwrap();
    let r2: Vec<(f64, f64)> = mdp_cells(&z2).iter().map(|c| (c.1, c.2)).collect();
    let z2_ok = r2.iter().all(|(d, r)| (r + d * d).abs() <= 0.15 * d * d);
    let elapsed = t.elapsed();
    Outcome {
        pass: z1_ok && z2_ok && elapsed < Duration::from_secs(120),
        detail: format!(
            "Z r_n at n=1e2,1e3,1e4: {:.4}, {:.4}, {:.4} (target -0.5 within 10%, |r_n + 0.5| decreasing); \
             Z^2 n=1e4: r(1) = {:.4}, r(2) = {:.4} (targets -1, -4 within 15%); {elapsed:.2?} (< 2 min)",
            r1[0], r1[1], r1[2], r2[0].1, r2[1].1
        ),
    }
}

/// 6. Optimizer exactness on horizontal and abelian targets.
fn rate_optimizer() -> Outcome {
    let t = Instant::now();
    let g = heisenberg_cayley();
    let alg = g.algebra();
    let forms = QuadraticForms::from_albanese(&albanese(&g).unwrap());
    let opts = RateOptions { knots: 8, restarts: 16, ..RateOptions::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..10 {
        let v = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let b = endpoint_rate(alg, &forms, &alg.horizontal(&v).unwrap(), &opts).unwrap();
        let d = b.value - forms.alpha_star(&v).unwrap();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let hex = hexagonal();
    let hex_forms = QuadraticForms::from_albanese(&albanese(&hex).unwrap());
    let mut abelian_err: f64 = 0.0;
    for _ in 0..10 {
        let v = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let b = endpoint_rate(hex.algebra(), &hex_forms, &hex.algebra().horizontal(&v).unwrap(), &opts)
            .unwrap();
        abelian_err = abelian_err.max((b.value - hex_forms.alpha_star(&v).unwrap()).abs());
    }
    let elapsed = t.elapsed();
    Outcome {
        pass: lo >= -1e-9 && hi <= 1e-4 && abelian_err <= 1e-6 && elapsed < Duration::from_secs(30),
        detail: format!(
            "horizontal excess in [{lo:.1e}, {hi:.1e}] (window [-1e-9, 1e-4]); abelian err {abelian_err:.1e} \
             (tol 1e-6); {elapsed:.2?} (< 30 s)"
        ),
    }
}

/// 7. α* against a grid supremum of `λ·χ − α(χ)`.
fn fenchel_duality() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let hex_sigma = albanese(&hexagonal()).unwrap().sigma;
    for k in 0..100 {
        let sigma = if k % 2 == 0 {
            [[hex_sigma[0][0], hex_sigma[0][1]], [hex_sigma[1][0], hex_sigma[1][1]]]
        } else {
            let (a, c) = (rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0));
            let b = rng.gen_range(-0.5..0.5) * f64::sqrt(a * c);
            [[a, b], [b, c]]
        };
        let forms = QuadraticForms::new(nalgebra::DMatrix::from_fn(2, 2, |i, j| sigma[i][j])).unwrap();
        let lam = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        worst = worst.max((forms.alpha_star(&lam).unwrap() - fenchel_grid_sup(sigma, lam)).abs());
    }
    let elapsed = t.elapsed();
    Outcome {
        pass: worst <= 1e-5 && elapsed < Duration::from_secs(10),
        detail: format!("max |alpha* - grid sup| {worst:.1e} on 100 lambda in {elapsed:.2?} (tol 1e-5, < 10 s)"),
    }
}

/// 8. LIL scatter on ℤ and the Heisenberg group.
fn lil_scatter() -> Outcome {
    let t = Instant::now();
    let lil = json!({"trajectories": 20, "n_min": 1000, "n_max": 10_000_000, "knots": 8, "restarts": 4});
    let z1 = run_lil(&config(json!({
        "graph": {"preset": "z1_srw"}, "seed": 8, "lil": lil,
        "tolerances": {"lil_level": 1.0, "lil_tol": 0.1}
    })))
    .unwrap();
    let heis = run_lil(&config(json!({
        "graph": {"preset": "heisenberg_cayley"}, "seed": 8, "lil": lil,
        "tolerances": {"lil_level": 1.0, "lil_tol": 0.2}
    })))
    .unwrap();
    let sup = z1.metrics["sup_statistic"].as_f64().unwrap();
    let sup_max = z1.metrics["sup_max"].as_f64().unwrap();
    let f1 = z1.metrics["fraction_within"].as_f64().unwrap();
    let fh = heis.metrics["fraction_within"].as_f64().unwrap();
    let elapsed = t.elapsed();
    Outcome {
        pass: (1.0..=1.55).contains(&sup) && f1 >= 0.99 && fh >= 0.95 && elapsed < Duration::from_secs(300),
        detail: format!(
            "Z sup statistic {sup:.3} (window [1.0, 1.55]; largest trajectory max {sup_max:.3}); \
             Z fraction with I_inf <= 1.1: {f1:.4} (need >= 0.99); Heisenberg fraction with bound <= 1.2: \
             {fh:.4} (need >= 0.95); {elapsed:.2?} (< 5 min)"
        ),
    }
}

/// 9. Byte-identical CSVs under 1 and 8 workers.
fn reproducibility() -> Outcome {
    let t = Instant::now();
    let runs: Vec<(&str, fn(&ExperimentConfig) -> Result<RunOutput, nilwalk::experiments::ExperimentError>, Value)> = vec![
        ("albanese", run_albanese, json!({"graph": {"preset": "hexagonal"}})),
        ("lln", run_lln, json!({"graph": {"preset": "z1_biased", "params": {"q": 0.75}}, "n_grid": [1000, 2000], "samples": 50})),
        ("clt", run_clt, json!({"graph": {"preset": "heisenberg_cayley"}, "n_grid": [500], "samples": 200})),
        ("mdp exact", run_mdp, json!({"graph": {"preset": "zd_lattice", "params": {"d": 2}}, "n_grid": [100, 400], "delta": [1.0, 2.0]})),
        ("mdp monte carlo", run_mdp, json!({"graph": {"preset": "heisenberg_cayley"}, "n_grid": [1000], "delta": [0.5], "samples": 300, "mdp": "monte_carlo"})),
        ("lil", run_lil, json!({"graph": {"preset": "heisenberg_cayley"}, "lil": {"trajectories": 6, "n_min": 100, "n_max": 3200, "knots": 4, "restarts": 3}})),
        ("rate", run_rate, json!({"graph": {"preset": "heisenberg_cayley"}, "rate": {"target": [0.3, -0.2, 0.4], "knots": 8, "restarts": 6}})),
    ];
    let mut mismatched = Vec::new();
    for (name, run, mut cfg) in runs {
        cfg["seed"] = json!(99);
        let csv = |workers: usize| {
            let mut c = cfg.clone();
            c["workers"] = json!(workers);
            run(&config(c)).unwrap().csv.unwrap()
        };
        let (a, b, c) = (csv(1), csv(8), csv(8));
        if a != b || b != c || a.is_empty() {
            mismatched.push(name);
        }
    }
    let elapsed = t.elapsed();
    Outcome {
        pass: mismatched.is_empty(),
        detail: format!("7 runs x (1, 8, 8 workers); mismatches: {mismatched:?}; {elapsed:.2?}"),
    }
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("Albanese exactness", albanese_exactness),
        ("harmonicity", harmonicity),
        ("group arithmetic oracle", group_arithmetic),
        ("CLT covariance", clt_covariance),
        ("MDP decay", mdp_decay),
        ("rate-function optimizer", rate_optimizer),
        ("Fenchel duality", fenchel_duality),
        ("LIL scatter", lil_scatter),
        ("reproducibility", reproducibility),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {} [{tag}] {name}: {}", i + 1, o.detail);
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
