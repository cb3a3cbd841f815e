//! Simplex (Nelder-Mead) minimization for the low-dimensional, smooth
//! objectives used by the pulse compiler.

/// Convergence and iteration limits.
#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_iters: usize,
    /// Declare convergence when the best objective improves by less than
    /// this over `stall_window` consecutive iterations.
    pub ftol: f64,
    pub stall_window: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iters: 4000,
            ftol: 1e-12,
            stall_window: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

/// Minimize `f` starting from `x0`, with the initial simplex spanned by
/// per-coordinate steps `scale`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    scale: &[f64],
    opts: &NelderMeadOptions,
) -> MinimizeResult {
    let n = x0.len();
    assert_eq!(scale.len(), n);
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        f(x)
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), v0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += scale[i];
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }

    let mut best_so_far = f64::INFINITY;
    let mut stall = 0usize;

    for _iter in 0..opts.max_iters {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());

        if simplex[0].1 < best_so_far - opts.ftol {
            best_so_far = simplex[0].1;
            stall = 0;
        } else {
            stall += 1;
            if stall >= opts.stall_window {
                break;
            }
        }

        // centroid of all but the worst point
        let mut centroid = vec![0.0; n];
        for (x, _) in simplex.iter().take(n) {
            for (c, xi) in centroid.iter_mut().zip(x.iter()) {
                *c += xi / n as f64;
            }
        }
        let worst = simplex[n].clone();

        let reflect: Vec<f64> = centroid
            .iter()
            .zip(worst.0.iter())
            .map(|(c, w)| c + alpha * (c - w))
            .collect();
        let fr = eval(&reflect, &mut evals);

        if fr < simplex[0].1 {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(worst.0.iter())
                .map(|(c, w)| c + gamma * (c - w))
                .collect();
            let fe = eval(&expand, &mut evals);
            simplex[n] = if fe < fr { (expand, fe) } else { (reflect, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (reflect, fr);
            continue;
        }
        let contract: Vec<f64> = centroid
            .iter()
            .zip(worst.0.iter())
            .map(|(c, w)| c + rho * (w - c))
            .collect();
        let fc = eval(&contract, &mut evals);
        if fc < worst.1 {
            simplex[n] = (contract, fc);
            continue;
        }
        // shrink toward the best point
        let best = simplex[0].0.clone();
        for entry in simplex.iter_mut().skip(1) {
            for (xi, bi) in entry.0.iter_mut().zip(best.iter()) {
                *xi = bi + sigma * (*xi - bi);
            }
            entry.1 = eval(&entry.0, &mut evals);
        }
    }

    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    MinimizeResult {
        x: simplex[0].0.clone(),
        value: simplex[0].1,
        evals,
    }
}
