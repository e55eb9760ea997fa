use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logarithmic grid over theta, refined by golden section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThetaGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    /// Stop refining when `hi / lo - 1` drops below this.
    pub rel_width: f64,
}

impl Default for ThetaGrid {
    fn default() -> Self {
        Self { min: 1e-4, max: 1e4, points: 400, rel_width: 1e-6 }
    }
}

impl ThetaGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.min > 0.0 && self.max > self.min && self.max.is_finite()) {
            return Err(Error::InvalidGrid(format!("bounds [{}, {}]", self.min, self.max)));
        }
        if self.points < 2 || self.rel_width.is_nan() || self.rel_width <= 0.0 {
            return Err(Error::InvalidGrid("need >= 2 points and a positive width".into()));
        }
        Ok(())
    }

    /// Grid points in log space, ascending.
    pub fn log_points(&self) -> Vec<f64> {
        let (a, b) = (self.min.ln(), self.max.ln());
        let step = (b - a) / (self.points - 1) as f64;
        (0..self.points).map(|i| a + step * i as f64).collect()
    }
}

/// Grid over one logit coordinate for the multi-outcome search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogitGrid {
    pub half_width: f64,
    pub points: usize,
    pub tol: f64,
    pub max_rounds: usize,
}

impl Default for LogitGrid {
    fn default() -> Self {
        Self { half_width: 10.0, points: 201, tol: 1e-9, max_rounds: 50 }
    }
}

impl LogitGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0 && self.half_width.is_finite())
            || self.points < 2
            || self.tol.is_nan()
            || self.tol <= 0.0
        {
            return Err(Error::InvalidGrid(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let step = 2.0 * self.half_width / (self.points - 1) as f64;
        (0..self.points).map(|i| -self.half_width + step * i as f64).collect()
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

struct Best {
    x: f64,
    fx: f64,
}

impl Best {
    fn offer(&mut self, x: f64, fx: f64) {
        if fx < self.fx || (fx == self.fx && x < self.x) {
            self.x = x;
            self.fx = fx;
        }
    }
}

/// Minimizes `f` over ascending `xs`, then refines the bracket around the
/// best grid point until it is narrower than `tol`. Ties go to smaller `x`.
pub(crate) fn grid_then_golden(xs: &[f64], tol: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let values: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut b = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[b] {
            b = i;
        }
    }
    let mut best = Best { x: xs[b], fx: values[b] };
    let (mut lo, mut hi) = (xs[b.saturating_sub(1)], xs[(b + 1).min(xs.len() - 1)]);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    best.offer(x1, f1);
    best.offer(x2, f2);
    (best.x, best.fx)
}
