use std::fmt::Write as _;

use rayon::prelude::*;
use serde_json::{json, Value};

use super::exact::{lattice_steps, AxisMixture, ExactLatticeDistribution};
use super::{ExperimentConfig, ExperimentError, MdpMode, RunOutput};
use crate::albanese::{albanese, clt_covariance_oracle, AlbaneseData};
use crate::group_algebra::GroupElement;
use crate::quotient_graph::VoltageGraph;
use crate::rate_functions::{
    endpoint_rate, limit_rate, min_knots, QuadraticForms, RateError, RateOptions,
};
use crate::streams::{install, stream_rng};
use crate::walker::{fmt_float, WalkError, WalkModel, Walker};

fn need_grid(cfg: &ExperimentConfig) -> Result<(), ExperimentError> {
    if cfg.n_grid.is_empty() {
        return Err(ExperimentError::Config("n_grid must not be empty".into()));
    }
    Ok(())
}

fn walk_model(
    cfg: &ExperimentConfig,
    graph: &VoltageGraph,
    data: &AlbaneseData,
) -> Result<WalkModel, ExperimentError> {
    let model = WalkModel::new(graph, &data.harmonic, &data.rho)?;
    if cfg.start >= model.vertex_count() {
        return Err(WalkError::StartVertex {
            vertex: cfg.start,
            count: model.vertex_count(),
        }
        .into());
    }
    Ok(model)
}

/// Stream id of sample `s` at grid index `gi`.
fn stream_id(gi: usize, s: usize) -> u64 {
    ((gi as u64) << 32) | s as u64
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

fn row(out: &mut String, fields: &[String]) {
    out.push_str(&fields.join(","));
    out.push('\n');
}

/// Invariant measure, direction, harmonic realization and `Σ`.
pub fn run_albanese(cfg: &ExperimentConfig) -> Result<RunOutput, ExperimentError> {
    let graph = cfg.graph()?;
    let data = albanese(&graph)?;
    let mut csv = String::from("quantity,i,j,value\n");
    for (i, r) in data.rho.iter().enumerate() {
        row(&mut csv, &["rho".into(), i.to_string(), String::new(), fmt_float(*r)]);
    }
    for (name, m) in [("sigma", &data.sigma), ("sigma_inv", &data.sigma_inv)] {
        for (i, r) in m.iter().enumerate() {
            for (j, x) in r.iter().enumerate() {
                row(&mut csv, &[name.into(), i.to_string(), j.to_string(), fmt_float(*x)]);
            }
        }
    }
    row(&mut csv, &["residual".into(), String::new(), String::new(), fmt_float(data.residual)]);
    Ok(RunOutput {
        name: "albanese",
        csv: Some(csv),
        json: Some(serde_json::to_value(&data).expect("AlbaneseData serializes")),
        metrics: json!({ "rho": data.rho, "sigma": data.sigma, "residual": data.residual }),
    })
}

/// Quantiles of `‖Ξₙ/n − ρ‖` over `samples` walks at each `n`.
pub fn run_lln(cfg: &ExperimentConfig) -> Result<RunOutput, ExperimentError> {
    need_grid(cfg)?;
    let graph = cfg.graph()?;
    let data = albanese(&graph)?;
    let model = walk_model(cfg, &graph, &data)?;
    let d1 = data.rho.len();
    let mut csv = String::from("n,samples,min,q10,q25,median,q75,q90,max,mean\n");
    let mut medians = Vec::new();
    for (gi, &n) in cfg.n_grid.iter().enumerate() {
        let nf = n as f64;
        let mut errors: Vec<f64> = install(cfg.workers, || {
            (0..cfg.samples)
                .into_par_iter()
                .map(|s| {
                    let mut w =
                        Walker::first_layer_only(&model, cfg.start, stream_rng(cfg.seed, stream_id(gi, s)));
                    w.advance(n);
                    let mut xb = vec![0.0; d1];
                    w.xi_bar_first_layer_into(&mut xb);
                    norm(&xb) / nf
                })
                .collect()
        });
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        errors.sort_by(f64::total_cmp);
        let q = |p| fmt_float(quantile(&errors, p));
        medians.push(quantile(&errors, 0.5));
        row(
            &mut csv,
            &[
                n.to_string(),
                cfg.samples.to_string(),
                q(0.0),
                q(0.1),
                q(0.25),
                q(0.5),
                q(0.75),
                q(0.9),
                q(1.0),
                fmt_float(mean),
            ],
        );
    }
    Ok(RunOutput {
        name: "lln",
        csv: Some(csv),
        json: None,
        metrics: json!({ "n": cfg.n_grid, "median_error": medians, "rho": data.rho }),
    })
}

/// Monte Carlo `(1/N) E[Ξ̄_N Ξ̄_Nᵀ]` against `Σ` at each `N` of the grid.
pub fn run_clt(cfg: &ExperimentConfig) -> Result<RunOutput, ExperimentError> {
    need_grid(cfg)?;
    let graph = cfg.graph()?;
    let data = albanese(&graph)?;
    let mut csv = String::from("n,i,j,estimate,standard_error,sigma,z\n");
    let mut max_z = Vec::new();
    for &n in &cfg.n_grid {
        let est = clt_covariance_oracle(
            &graph,
            &data.harmonic,
            &data.rho,
            n,
            cfg.samples,
            cfg.seed,
            cfg.workers,
        )?;
        let mut worst: f64 = 0.0;
        for (i, r) in est.estimate.iter().enumerate() {
            for (j, x) in r.iter().enumerate() {
                let se = est.standard_error[i][j];
                let sigma = data.sigma[i][j];
                let z = if se > 0.0 { (x - sigma) / se } else if *x == sigma { 0.0 } else { f64::INFINITY };
                worst = worst.max(z.abs());
                row(
                    &mut csv,
                    &[
                        n.to_string(),
                        i.to_string(),
                        j.to_string(),
                        fmt_float(*x),
                        fmt_float(se),
                        fmt_float(sigma),
                        fmt_float(z),
                    ],
                );
            }
        }
        max_z.push(worst);
    }
    Ok(RunOutput {
        name: "clt",
        csv: Some(csv),
        json: None,
        metrics: json!({ "n": cfg.n_grid, "max_abs_z": max_z, "sigma": data.sigma }),
    })
}

/// One `(n, δ)` cell of the MDP scan.
#[derive(Debug, Clone, Copy, PartialEq)]
struct MdpCell {
    n: u64,
    delta: f64,
    a_n: f64,
    tail: f64,
    r_n: f64,
    target: f64,
}

/// Tails `P(‖Ξ̄ₙ‖ ≥ δaₙ)` and `rₙ = (n/aₙ²) log P` against
/// `−δ² / (2 λ_max(Σ))`.
pub fn run_mdp(cfg: &ExperimentConfig) -> Result<RunOutput, ExperimentError> {
    need_grid(cfg)?;
    if cfg.delta.is_empty() {
        return Err(ExperimentError::Config("delta must not be empty".into()));
    }
    let scaling = cfg.scaling.sequence()?;
    let graph = cfg.graph()?;
    let data = albanese(&graph)?;
    let lambda_max = data.sigma_matrix().symmetric_eigen().eigenvalues.max();
    let a: Vec<f64> = cfg
        .n_grid
        .iter()
        .map(|&n| scaling.value(n))
        .collect::<Result<_, _>>()?;
    let (method, tails): (&str, Vec<Vec<f64>>) = match cfg.mdp {
        MdpMode::Exact => exact_tails(cfg, &graph, &data, &a)?,
        MdpMode::MonteCarlo => ("monte_carlo", mc_tails(cfg, &graph, &data, &a)?),
    };
    let mut cells = Vec::new();
    for (gi, &n) in cfg.n_grid.iter().enumerate() {
        for (di, &delta) in cfg.delta.iter().enumerate() {
            let tail = tails[gi][di];
            cells.push(MdpCell {
                n,
                delta,
                a_n: a[gi],
                tail,
                r_n: n as f64 / (a[gi] * a[gi]) * tail.ln(),
                target: -delta * delta / (2.0 * lambda_max),
            });
        }
    }
    let mut csv = String::from("n,delta,a_n,tail,r_n,target,relative_error,method\n");
    for c in &cells {
        row(
            &mut csv,
            &[
                c.n.to_string(),
                fmt_float(c.delta),
                fmt_float(c.a_n),
                fmt_float(c.tail),
                fmt_float(c.r_n),
                fmt_float(c.target),
                fmt_float((c.r_n - c.target).abs() / c.target.abs()),
                method.into(),
            ],
        );
    }
    let metrics: Vec<Value> = cells
        .iter()
        .map(|c| json!({ "n": c.n, "delta": c.delta, "tail": c.tail, "r_n": c.r_n, "target": c.target }))
        .collect();
    Ok(RunOutput {
        name: "mdp",
        csv: Some(csv),
        json: None,
        metrics: json!({ "method": method, "cells": metrics, "lambda_max": lambda_max }),
    })
}

/// Exact tails per grid point and δ. Grid points run in parallel; each
/// convolution is sequential.
fn exact_tails(
    cfg: &ExperimentConfig,
    graph: &VoltageGraph,
    data: &AlbaneseData,
    a: &[f64],
) -> Result<(&'static str, Vec<Vec<f64>>), ExperimentError> {
    lattice_steps(graph)?;
    let mixture = match graph.algebra().first_layer_dim() {
        2 => AxisMixture::from_graph(graph).ok(),
        _ => None,
    };
    let method = if mixture.is_some() { "exact_axis_mixture" } else { "exact_dp" };
    let tails: Vec<Result<Vec<f64>, ExperimentError>> = install(cfg.workers, || {
        cfg.n_grid
            .par_iter()
            .zip(a)
            .map(|(&n, &a_n)| {
                let center: Vec<f64> = data.rho.iter().map(|r| n as f64 * r).collect();
                let radii: Vec<f64> = cfg.delta.iter().map(|d| d * a_n).collect();
                match &mixture {
                    Some(m) => Ok(m.tails(n, &center, &radii)),
                    None => {
                        let dist = ExactLatticeDistribution::new(graph, n)?;
                        Ok(radii.iter().map(|r| dist.tail(&center, *r)).collect())
                    }
                }
            })
            .collect()
    });
    Ok((method, tails.into_iter().collect::<Result<_, _>>()?))
}

/// Empirical tail frequencies of `‖Ξ̄ₙ‖` (first layer).
fn mc_tails(
    cfg: &ExperimentConfig,
    graph: &VoltageGraph,
    data: &AlbaneseData,
    a: &[f64],
) -> Result<Vec<Vec<f64>>, ExperimentError> {
    let model = walk_model(cfg, graph, data)?;
    let d1 = data.rho.len();
    Ok(cfg
        .n_grid
        .iter()
        .enumerate()
        .map(|(gi, &n)| {
            let norms: Vec<f64> = install(cfg.workers, || {
                (0..cfg.samples)
                    .into_par_iter()
                    .map(|s| {
                        let mut w = Walker::first_layer_only(
                            &model,
                            cfg.start,
                            stream_rng(cfg.seed, stream_id(gi, s)),
                        );
                        w.advance(n);
                        let mut xb = vec![0.0; d1];
                        w.xi_bar_first_layer_into(&mut xb);
                        norm(&xb)
                    })
                    .collect()
            });
            cfg.delta
                .iter()
                .map(|d| {
                    let hits = norms.iter().filter(|x| **x >= d * a[gi]).count();
                    hits as f64 / cfg.samples as f64
                })
                .collect()
        })
        .collect())
}

/// Recorded points of one LIL trajectory.
struct Trajectory {
    /// `max ‖Ξ̄ₙ‖ / bₙ` over the sup window.
    sup: f64,
    points: Vec<(u64, f64, GroupElement)>,
}

/// Scaled endpoints `τ_{1/bₙ}(φ(ξ̄ₙ))` along a geometric grid for several
/// trajectories, each with an upper bound on `I∞`.
///
/// The supremum statistic is the median over trajectories of
/// `max_{n_min ≤ n ≤ n_max} ‖Ξ̄ₙ‖ / bₙ`, taken over every step.
pub fn run_lil(cfg: &ExperimentConfig) -> Result<RunOutput, ExperimentError> {
    let lil = cfg.lil;
    let grid: Vec<u64> = if cfg.n_grid.is_empty() {
        std::iter::successors(Some(lil.n_min), |n| n.checked_mul(2))
            .take_while(|n| *n <= lil.n_max)
            .collect()
    } else {
        cfg.n_grid.clone()
    };
    let scaling = crate::walker::ScalingSequence::lil();
    let b: Vec<f64> = grid
        .iter()
        .map(|&n| scaling.value(n))
        .collect::<Result<_, _>>()?;
    let graph = cfg.graph()?;
    let data = albanese(&graph)?;
    let model = walk_model(cfg, &graph, &data)?;
    let alg = graph.algebra();
    let d1 = data.rho.len();
    let n_end = lil.n_max.max(*grid.last().expect("grid is nonempty"));

    let trajectories: Vec<Trajectory> = install(cfg.workers, || {
        (0..lil.trajectories)
            .into_par_iter()
            .map(|t| {
                let mut w = Walker::new(&model, cfg.start, stream_rng(cfg.seed, t as u64));
                let mut xb = vec![0.0; d1];
                let mut sup2: f64 = 0.0;
                let mut points = Vec::with_capacity(grid.len());
                let mut next = 0;
                for n in 1..=n_end {
                    w.step();
                    if n >= lil.n_min && n <= lil.n_max {
                        w.xi_bar_first_layer_into(&mut xb);
                        let nf = n as f64;
                        let s2: f64 = xb.iter().map(|x| x * x).sum();
                        sup2 = sup2.max(s2 / (nf * nf.ln().ln()));
                    }
                    if next < grid.len() && n == grid[next] {
                        let g = alg.phi_map(&w.xi_bar());
                        let z = alg.dilate_tau(1.0 / b[next], &g).expect("b_n is positive");
                        points.push((n, b[next], z));
                        next += 1;
                    }
                }
                Trajectory {
                    sup: sup2.sqrt(),
                    points,
                }
            })
            .collect()
    });

    let forms = QuadraticForms::from_albanese(&data);
    let opts = RateOptions {
        knots: lil.knots.max(min_knots(alg)),
        restarts: lil.restarts,
        seed: cfg.seed,
        ..RateOptions::default()
    };
    let flat: Vec<(usize, &(u64, f64, GroupElement))> = trajectories
        .iter()
        .enumerate()
        .flat_map(|(t, tr)| tr.points.iter().map(move |p| (t, p)))
        .collect();
    let bounds: Vec<Result<(f64, f64), RateError>> = install(cfg.workers, || {
        flat.par_iter()
            .map(|(_, (_, _, z))| match limit_rate(alg, &forms, z, &opts) {
                Ok(b) => Ok((b.value, b.constraint_violation)),
                Err(RateError::InfeasibleReported { violation }) => Ok((f64::INFINITY, violation)),
                Err(e) => Err(e),
            })
            .collect()
    });
    let bounds: Vec<(f64, f64)> = bounds.into_iter().collect::<Result<_, _>>()?;

    let threshold = cfg.tolerances.lil_level + cfg.tolerances.lil_tol;
    let mut csv = String::from("trajectory,n,b_n");
    for i in 0..alg.dim() {
        let _ = write!(csv, ",z{i}");
    }
    csv.push_str(",rate_bound,violation\n");
    for ((t, (n, b_n, z)), (value, viol)) in flat.iter().zip(&bounds) {
        let mut fields = vec![t.to_string(), n.to_string(), fmt_float(*b_n)];
        fields.extend(z.coords().iter().map(|x| fmt_float(*x)));
        fields.push(fmt_float(*value));
        fields.push(fmt_float(*viol));
        row(&mut csv, &fields);
    }
    let within = bounds.iter().filter(|(v, _)| *v <= threshold).count();
    let sups: Vec<f64> = trajectories.iter().map(|t| t.sup).collect();
    let sup_max = sups.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(RunOutput {
        name: "lil",
        csv: Some(csv),
        json: None,
        metrics: json!({
            "grid": grid,
            "sup_window": [lil.n_min, lil.n_max],
            "trajectory_sup": sups,
            "sup_statistic": median(&sups),
            "sup_max": sup_max,
            "threshold": threshold,
            "points": bounds.len(),
            "within": within,
            "fraction_within": within as f64 / bounds.len().max(1) as f64,
        }),
    })
}

/// Upper bound on `I(g)` (or `I∞(g)`) at the configured target.
pub fn run_rate(cfg: &ExperimentConfig) -> Result<RunOutput, ExperimentError> {
    let graph = cfg.graph()?;
    let alg = graph.algebra();
    let data: AlbaneseData = match &cfg.rate.albanese {
        Some(p) => {
            let path = cfg.base_dir.join(p);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| ExperimentError::Schema {
                pointer: String::new(),
                message: format!("{}: {e}", path.display()),
            })?
        }
        None => albanese(&graph)?,
    };
    let forms = QuadraticForms::new(data.sigma_matrix())?;
    let g = alg.element(cfg.rate.target.clone())?;
    let opts = RateOptions {
        knots: cfg.rate.knots,
        restarts: cfg.rate.restarts,
        seed: cfg.seed,
        ..RateOptions::default()
    };
    let bound = if cfg.rate.limit {
        limit_rate(alg, &forms, &g, &opts)?
    } else {
        endpoint_rate(alg, &forms, &g, &opts)?
    };
    let path = bound.path()?;
    let mut csv = String::from("t");
    for i in 0..path.dim() {
        let _ = write!(csv, ",h{i}");
    }
    csv.push('\n');
    for (t, v) in path.knots().iter().zip(path.values()) {
        let mut fields = vec![fmt_float(*t)];
        fields.extend(v.iter().map(|x| fmt_float(*x)));
        row(&mut csv, &fields);
    }
    let law = if cfg.rate.limit { "limit" } else { "original" };
    let result = json!({
        "target": cfg.rate.target,
        "law": law,
        "value": bound.value,
        "constraint_violation": bound.constraint_violation,
        "knots": bound.knots,
        "restarts_used": bound.restarts_used,
    });
    Ok(RunOutput {
        name: "rate",
        csv: Some(csv),
        json: Some(result.clone()),
        metrics: result,
    })
}
