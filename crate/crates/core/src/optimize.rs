//! Derivative-free minimization (Nelder–Mead simplex).
//!
//! Non-finite objective values are treated as `+∞`, so infeasible regions
//! simply repel the simplex. The method is fully deterministic.

/// Stopping rules and initial simplex size.
#[derive(Clone, Debug)]
pub struct NelderMeadOptions {
    /// Edge length of the initial simplex along each coordinate.
    pub initial_step: f64,
    pub max_evals: usize,
    /// Stop when `f_max - f_min <= ftol * (|f_min| + ftol)` ...
    pub ftol: f64,
    /// ... and every vertex lies within `xtol` of the best one.
    pub xtol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions { initial_step: 0.5, max_evals: 600, ftol: 1e-11, xtol: 1e-7 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

fn finite_or_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Minimizes `f` starting from a right-angled simplex at `x0`.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        finite_or_inf(f(x))
    };
    if n == 0 {
        let v = eval(x0, &mut evals);
        return Minimum { x: Vec::new(), f: v, evals, converged: true };
    }

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += opts.initial_step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }

    let mut converged = false;
    while evals < opts.max_evals {
        // stable sort keeps the older vertex first on ties
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[n].1);
        let spread_x = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if best.is_finite() && worst - best <= opts.ftol * (best.abs() + opts.ftol) && spread_x <= opts.xtol {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (c - w)).collect()
        };

        let xr = along(REFLECT);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(EXPAND);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let xc = along(REFLECT * CONTRACT);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-CONTRACT);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < fr.min(simplex[n].1) {
            simplex[n] = (xc, fc);
            continue;
        }
        let x_best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x: Vec<f64> =
                x_best.iter().zip(&vertex.0).map(|(b, v)| b + SHRINK * (v - b)).collect();
            let v = eval(&x, &mut evals);
            *vertex = (x, v);
        }
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    Minimum { x, f, evals, converged }
}
