//! Small derivative-free and quasi-Newton minimizers for the rate and
//! distance bounds. Objectives are plain closures over `&[f64]`.

/// Result of a minimization run.
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
    /// Stop when the simplex diameter falls below this.
    pub x_tol: f64,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_iter: 20_000,
            f_tol: 1e-13,
            x_tol: 1e-11,
            initial_step: 0.1,
        }
    }
}

/// Nelder–Mead with dimension-adaptive coefficients (Gao & Han).
///
/// Never returns a point worse than `x0`.
pub fn nelder_mead<F>(f: F, x0: &[f64], opts: NelderMeadOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let f0 = f(x0);
    if n == 0 {
        return Minimum {
            x: Vec::new(),
            value: f0,
            iterations: 0,
        };
    }
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut x = x0.to_vec();
        let h = if x[i] != 0.0 {
            opts.initial_step * x[i].abs().max(1e-3)
        } else {
            opts.initial_step * 0.25
        };
        x[i] += h;
        let fx = f(&x);
        simplex.push((x, fx));
    }

    let mut iterations = 0;
    let mut centroid = vec![0.0; n];
    while iterations < opts.max_iter {
        iterations += 1;
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread.abs() <= opts.f_tol || diameter <= opts.x_tol {
            break;
        }

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / nf;
            }
        }
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(alpha);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(alpha * beta);
            let fe = f(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst.1 {
            let x = along(alpha * gamma);
            let fx = f(&x);
            (x, fx)
        } else {
            let x = along(-gamma);
            let fx = f(&x);
            (x, fx)
        };
        if fc < worst.1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for (x, fx) in simplex.iter_mut().skip(1) {
            for (xi, bi) in x.iter_mut().zip(&best) {
                *xi = bi + delta * (*xi - bi);
            }
            *fx = f(x);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    if value <= f0 {
        Minimum {
            x,
            value,
            iterations,
        }
    } else {
        Minimum {
            x: x0.to_vec(),
            value: f0,
            iterations,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Central-difference step for the gradient.
    pub fd_step: f64,
    /// Stop when the infinity norm of the gradient falls below this.
    pub g_tol: f64,
    /// Stop when the relative decrease over an iteration falls below this.
    pub f_rel_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iter: 500,
            fd_step: 1e-6,
            g_tol: 1e-10,
            f_rel_tol: 1e-15,
        }
    }
}

pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], h: f64, grad: &mut [f64]) {
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let xi = x[i];
        xp[i] = xi + h;
        let fp = f(&xp);
        xp[i] = xi - h;
        let fm = f(&xp);
        xp[i] = xi;
        grad[i] = (fp - fm) / (2.0 * h);
    }
}

/// BFGS with central finite-difference gradients and Armijo backtracking.
///
/// Never returns a point worse than `x0`.
pub fn bfgs<F>(f: F, x0: &[f64], opts: BfgsOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut g = vec![0.0; n];
    fd_gradient(&f, &x, opts.fd_step, &mut g);
    // inverse Hessian approximation, row-major
    let mut h = identity(n);
    let mut dir = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut iterations = 0;
    let mut scaled_first = false;
    let mut stalled = 0;

    while iterations < opts.max_iter {
        if !fx.is_finite() {
            break;
        }
        let gmax = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if gmax <= opts.g_tol {
            break;
        }
        iterations += 1;

        for i in 0..n {
            dir[i] = -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>();
        }
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        if slope >= 0.0 {
            h = identity(n);
            for i in 0..n {
                dir[i] = -g[i];
            }
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + t * dir[i];
            }
            let f_new = f(&x_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * t * slope {
                accepted = true;
                let decrease = fx - f_new;
                fd_gradient(&f, &x_new, opts.fd_step, &mut g_new);
                let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
                let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
                let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
                if sy > 1e-300 {
                    if !scaled_first {
                        let yy: f64 = y.iter().map(|v| v * v).sum();
                        let scale = sy / yy;
                        h.iter_mut().for_each(|v| *v = 0.0);
                        for i in 0..n {
                            h[i * n + i] = scale;
                        }
                        scaled_first = true;
                    }
                    bfgs_update(&mut h, &s, &y, sy);
                }
                x.copy_from_slice(&x_new);
                g.copy_from_slice(&g_new);
                let rel = decrease / fx.abs().max(1e-300);
                fx = f_new;
                if rel <= opts.f_rel_tol {
                    stalled += 1;
                } else {
                    stalled = 0;
                }
                break;
            }
            t *= 0.5;
        }
        if !accepted || stalled >= 3 {
            break;
        }
    }
    let f0 = f(x0);
    if fx <= f0 || !f0.is_finite() {
        Minimum {
            x,
            value: fx,
            iterations,
        }
    } else {
        Minimum {
            x: x0.to_vec(),
            value: f0,
            iterations,
        }
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum())
        .collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn bfgs_rosenbrock() {
        let m = bfgs(rosenbrock, &[-1.2, 1.0], BfgsOptions::default());
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{m:?}");
    }

    #[test]
    fn nelder_mead_nonsmooth() {
        let f = |x: &[f64]| (x[0] - 1.0).abs() + 2.0 * (x[1] + 0.5).abs() + (x[2]).abs();
        let m = nelder_mead(f, &[3.0, 3.0, 3.0], NelderMeadOptions::default());
        assert!(m.value < 1e-8, "{m:?}");
    }

    #[test]
    fn never_worse_than_start() {
        let f = |x: &[f64]| x[0].abs();
        let m = nelder_mead(f, &[0.0], NelderMeadOptions::default());
        assert_eq!(m.value, 0.0);
        let m = bfgs(|x: &[f64]| x[0] * x[0], &[0.0], BfgsOptions::default());
        assert_eq!(m.value, 0.0);
    }
}
