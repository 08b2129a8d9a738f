//! Box-constrained Nelder–Mead minimization.
//!
//! Trial points are projected onto the box. The starting point is always a
//! simplex vertex, so the result is never worse than `f(x0)`.

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

pub fn minimize_bounded<F>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    max_iterations: usize,
) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = x0.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let project = |x: &mut [f64]| {
        for i in 0..dim {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };

    let mut start = x0.to_vec();
    project(&mut start);
    let f0 = eval(&start);
    if dim == 0 {
        return SimplexResult {
            x: start,
            value: f0,
            iterations: 0,
            evaluations,
        };
    }

    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.clone(), f0)];
    for i in 0..dim {
        let width = upper[i] - lower[i];
        let step = (0.1 * width).clamp(1e-3, 1.0);
        let mut x = start.clone();
        x[i] = if x[i] + step <= upper[i] { x[i] + step } else { x[i] - step };
        project(&mut x);
        let v = eval(&x);
        simplex.push((x, v));
    }

    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        let spread = simplex
            .iter()
            .skip(1)
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if (worst - best).abs() <= 1e-10 * (best.abs() + 1e-10) && spread < 1e-8 {
            break;
        }

        let mut centroid = vec![0.0; dim];
        for (x, _) in &simplex[..dim] {
            for i in 0..dim {
                centroid[i] += x[i] / dim as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = (0..dim)
                .map(|i| centroid[i] + t * (simplex[dim].0[i] - centroid[i]))
                .collect();
            project(&mut p);
            p
        };

        let xr = along(-REFLECT);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(-REFLECT * EXPAND);
            let fe = eval(&xe);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst {
            let xc = along(-REFLECT * CONTRACT);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(CONTRACT);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < worst.min(fr) {
            simplex[dim] = (xc, fc);
            continue;
        }
        let anchor = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let mut x: Vec<f64> = (0..dim)
                .map(|i| anchor[i] + SHRINK * (vertex.0[i] - anchor[i]))
                .collect();
            project(&mut x);
            let v = eval(&x);
            *vertex = (x, v);
        }
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    SimplexResult {
        x,
        value,
        iterations,
        evaluations,
    }
}
