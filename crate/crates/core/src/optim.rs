//! Derivative-free minimization over a box.

use crate::scalar::{lit, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOptions<T> {
    /// Initial simplex edge along each coordinate.
    pub step: Vec<T>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    /// Stop once every vertex lies within `xtol` of the best in each coordinate.
    pub xtol: T,
    pub max_evals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum<T> {
    pub x: Vec<T>,
    pub value: T,
    pub evals: usize,
    pub converged: bool,
}

fn project<T: Real>(x: &mut [T], lo: &[T], hi: &[T]) {
    for ((v, &l), &h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.max(l).min(h);
    }
}

/// Nelder–Mead simplex search with every trial point projected onto the box.
pub fn nelder_mead<T: Real, F: FnMut(&[T]) -> T>(
    mut f: F,
    x0: &[T],
    opts: &NelderMeadOptions<T>,
) -> Minimum<T> {
    let n = x0.len();
    let (lo, hi) = (&opts.lower, &opts.upper);
    let mut evals = 0;
    let mut eval = |x: &[T], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            T::infinity()
        } else {
            v
        }
    };

    let mut start = x0.to_vec();
    project(&mut start, lo, hi);
    let mut simplex: Vec<Vec<T>> = vec![start.clone()];
    for i in 0..n {
        let mut v = start.clone();
        // step away from the nearer bound so the simplex stays full-dimensional
        v[i] = if v[i] + opts.step[i] <= hi[i] {
            v[i] + opts.step[i]
        } else {
            v[i] - opts.step[i]
        };
        project(&mut v, lo, hi);
        simplex.push(v);
    }
    let mut values: Vec<T> = simplex.iter().map(|x| eval(x, &mut evals)).collect();

    let (alpha, gamma, rho, sigma) = (T::one(), lit::<T>(2.0), lit::<T>(0.5), lit::<T>(0.5));
    let mut converged = false;
    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (*a - *b).abs()))
            .fold(T::zero(), T::max);
        if spread <= opts.xtol {
            converged = true;
            break;
        }
        if evals >= opts.max_evals {
            break;
        }

        let mut centroid = vec![T::zero(); n];
        for v in &simplex[..n] {
            for (c, &x) in centroid.iter_mut().zip(v) {
                *c = *c + x / lit(n as f64);
            }
        }
        let toward = |coef: T| -> Vec<T> {
            let mut p: Vec<T> = centroid
                .iter()
                .zip(&simplex[n])
                .map(|(&c, &w)| c + coef * (c - w))
                .collect();
            project(&mut p, lo, hi);
            p
        };

        let reflected = toward(alpha);
        let fr = eval(&reflected, &mut evals);
        if fr < values[0] {
            let expanded = toward(gamma);
            let fe = eval(&expanded, &mut evals);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let (contracted, fc) = if fr < values[n] {
                let p = toward(rho);
                let v = eval(&p, &mut evals);
                (p, v)
            } else {
                let p = toward(-rho);
                let v = eval(&p, &mut evals);
                (p, v)
            };
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    let shrunk: Vec<T> = simplex[0]
                        .iter()
                        .zip(&simplex[i])
                        .map(|(&b, &x)| b + sigma * (x - b))
                        .collect();
                    values[i] = eval(&shrunk, &mut evals);
                    simplex[i] = shrunk;
                }
            }
        }
    }
    Minimum {
        x: simplex.swap_remove(0),
        value: values[0],
        evals,
        converged,
    }
}
