//! Small derivative-free minimizer and a damped Gauss–Newton root finder used
//! by the gain-design routines.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evals: usize,
}

/// Nelder–Mead simplex search. Stops after `max_evals` evaluations, when the
/// best value drops below `target`, or when the simplex collapses.
pub fn nelder_mead<F>(f: F, x0: &[f64], step: f64, max_evals: usize, target: f64) -> NmResult
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += if x[i].abs() > 1e-12 { step * x[i].abs().max(1.0) } else { step };
        simplex.push(x);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x)).collect();
    let mut evals = n + 1;

    while evals < max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        if values[0] < target {
            break;
        }
        let size = simplex[1..]
            .iter()
            .map(|x| x.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if size < 1e-12 * (1.0 + simplex[0].iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|x| x[j]).sum::<f64>() / n as f64).collect();
        let towards = |coef: f64| -> Vec<f64> {
            (0..n).map(|j| centroid[j] + coef * (simplex[n][j] - centroid[j])).collect()
        };
        let xr = towards(-1.0);
        let fr = eval(&xr);
        evals += 1;
        if fr < values[0] {
            let xe = towards(-2.0);
            let fe = eval(&xe);
            evals += 1;
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let (xc, fc) = if fr < values[n] {
                let xc = towards(-0.5);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = towards(0.5);
                let fc = eval(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    let xs: Vec<f64> = (0..n).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
                    values[i] = eval(&xs);
                    simplex[i] = xs;
                }
                evals += n;
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    NmResult { x: simplex[best].clone(), fx: values[best], evals }
}

/// Levenberg–Marquardt iteration for `r(x) = 0` with a forward-difference
/// Jacobian. Returns the final point and residual norm.
pub fn levenberg_marquardt<F>(r: F, x0: &[f64], max_iter: usize, tol: f64) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let n = x0.len();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut x = x0.to_vec();
    let mut rx = match r(&x) {
        Some(v) => v,
        None => return (x, f64::INFINITY),
    };
    let mut nr = norm(&rx);
    let mut lambda = 1e-3;
    for _ in 0..max_iter {
        if nr <= tol {
            break;
        }
        let m = rx.len();
        let mut jac = DMatrix::<f64>::zeros(m, n);
        for j in 0..n {
            let h = 1e-7 * x[j].abs().max(1.0);
            let mut xp = x.clone();
            xp[j] += h;
            let Some(rp) = r(&xp) else { return (x, nr) };
            for i in 0..m {
                jac[(i, j)] = (rp[i] - rx[i]) / h;
            }
        }
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&rx);
        let mut improved = false;
        for _ in 0..12 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * (jtj[(i, i)].abs() + 1e-12);
            }
            let Some(dx) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let xn: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, b)| a + b).collect();
            if let Some(rn) = r(&xn) {
                let nn = norm(&rn);
                if nn.is_finite() && nn < nr {
                    x = xn;
                    rx = rn;
                    nr = nn;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = true;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (x, nr)
}
