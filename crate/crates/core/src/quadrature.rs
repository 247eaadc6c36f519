//! Composite Gauss–Legendre quadrature on uniformly refined panel grids.

use crate::error::{Error, Result};
use crate::scalar::{count, lit, Real};

// 8-point Gauss–Legendre rule on [−1, 1], symmetric half.
const GL8_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Panel-doubling schedule and stopping rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSchedule<T> {
    pub initial_panels: usize,
    pub max_panels: usize,
    pub rel_tol: T,
    pub abs_tol: T,
}

impl<T: Real> Default for GridSchedule<T> {
    fn default() -> Self {
        Self {
            initial_panels: 8,
            max_panels: 1 << 14,
            rel_tol: lit(1e-12),
            abs_tol: T::min_positive_value(),
        }
    }
}

fn nodes<T: Real>() -> impl Iterator<Item = (T, T)> {
    GL8_NODES
        .iter()
        .zip(GL8_WEIGHTS.iter())
        .flat_map(|(&x, &w)| [(lit::<T>(-x), lit::<T>(w)), (lit::<T>(x), lit::<T>(w))])
}

/// Integral of `f` over [a, b] with `panels` equal panels.
pub fn composite<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T, panels: usize) -> T {
    let width = (b - a) / count(panels);
    let half = width * lit(0.5);
    let mut total = T::zero();
    for p in 0..panels {
        let mid = a + width * (count::<T>(p) + lit(0.5));
        let panel: T = nodes::<T>().map(|(x, w)| w * f(mid + half * x)).sum();
        total = total + panel * half;
    }
    total
}

/// Tensor-product rule over [ax, bx] × [ay, by].
pub fn composite_2d<T: Real, F: Fn(T, T) -> T>(
    f: &F,
    (ax, bx): (T, T),
    (ay, by): (T, T),
    panels_x: usize,
    panels_y: usize,
) -> T {
    let inner = |x: T| composite(&|y| f(x, y), ay, by, panels_y);
    composite(&inner, ax, bx, panels_x)
}

fn converged<T: Real>(prev: T, next: T, sched: &GridSchedule<T>) -> bool {
    (next - prev).abs() <= sched.rel_tol * next.abs() + sched.abs_tol
}

/// Doubles the panel count until two successive estimates agree.
pub fn integrate<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T, sched: &GridSchedule<T>) -> Result<T> {
    if !(b > a) {
        return Ok(T::zero());
    }
    let mut panels = sched.initial_panels.max(1);
    let mut prev = composite(f, a, b, panels);
    while panels < sched.max_panels {
        panels *= 2;
        let next = composite(f, a, b, panels);
        if converged(prev, next, sched) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::numeric(format!(
        "quadrature did not reach rel_tol {} with {} panels",
        sched.rel_tol, sched.max_panels
    )))
}

/// Two-dimensional analogue of [`integrate`], refining both axes together.
pub fn integrate_2d<T: Real, F: Fn(T, T) -> T>(
    f: &F,
    x: (T, T),
    y: (T, T),
    sched: &GridSchedule<T>,
) -> Result<T> {
    if !(x.1 > x.0 && y.1 > y.0) {
        return Ok(T::zero());
    }
    let mut panels = sched.initial_panels.max(1);
    let mut prev = composite_2d(f, x, y, panels, panels);
    while panels < sched.max_panels {
        panels *= 2;
        let next = composite_2d(f, x, y, panels, panels);
        if converged(prev, next, sched) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::numeric(format!(
        "2-D quadrature did not reach rel_tol {} with {} panels per axis",
        sched.rel_tol, sched.max_panels
    )))
}
