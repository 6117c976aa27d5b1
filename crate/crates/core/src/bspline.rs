//! Clamped B-spline bases on a bounded interval.
//!
//! Basis values come from the triangular Cox–de Boor scheme, so only the
//! `degree + 1` functions that are nonzero at `x` are ever computed. Stored
//! bases are the standard (unnormalized) B-splines.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplineError {
    #[error("degenerate domain [{a}, {b}]")]
    DegenerateDomain { a: f64, b: f64 },
    #[error("quantile knots need a non-empty data vector")]
    EmptyQuantileData,
    #[error("cannot place {interior} distinct interior knots from the data")]
    DuplicateKnots { interior: usize },
    #[error("coefficient vector has length {found}, basis has {expected} functions")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnotRule {
    Uniform,
    Quantile,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplineSpec {
    pub degree: usize,
    pub interior_knots: usize,
    pub domain: (f64, f64),
    pub knot_rule: KnotRule,
}

impl SplineSpec {
    pub fn cubic(interior_knots: usize, domain: (f64, f64)) -> Self {
        Self {
            degree: 3,
            interior_knots,
            domain,
            knot_rule: KnotRule::Uniform,
        }
    }

    /// Basis dimension `J_n + d + 1`.
    pub fn dim(&self) -> usize {
        self.interior_knots + self.degree + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    spec: SplineSpec,
    knots: Vec<f64>,
}

impl SplineBasis {
    /// Builds the clamped knot vector: boundary knots repeated `d + 1` times
    /// around `J_n` strictly increasing interior knots.
    ///
    /// Quantile knots that tie are pulled toward the uniform positions; if
    /// that still cannot separate them the data are too discrete and
    /// [`SplineError::DuplicateKnots`] is returned.
    pub fn new(spec: SplineSpec, data: Option<&[f64]>) -> Result<Self, SplineError> {
        let (a, b) = spec.domain;
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(SplineError::DegenerateDomain { a, b });
        }
        let jn = spec.interior_knots;
        let uniform: Vec<f64> = (1..=jn)
            .map(|l| a + (b - a) * l as f64 / (jn + 1) as f64)
            .collect();
        let interior = match spec.knot_rule {
            KnotRule::Uniform => uniform,
            KnotRule::Quantile => {
                let data = data.filter(|d| !d.is_empty()).ok_or(SplineError::EmptyQuantileData)?;
                let mut sorted: Vec<f64> = data.iter().map(|v| v.clamp(a, b)).collect();
                sorted.sort_by(f64::total_cmp);
                let q: Vec<f64> = (1..=jn)
                    .map(|l| quantile(&sorted, l as f64 / (jn + 1) as f64))
                    .collect();
                [0.0, 0.5, 0.9]
                    .iter()
                    .map(|&w| {
                        q.iter()
                            .zip(&uniform)
                            .map(|(qv, uv)| (1.0 - w) * qv + w * uv)
                            .collect::<Vec<f64>>()
                    })
                    .find(|k| strictly_inside(k, a, b))
                    .ok_or(SplineError::DuplicateKnots { interior: jn })?
            }
        };
        let d = spec.degree;
        let mut knots = Vec::with_capacity(jn + 2 * (d + 1));
        knots.extend(core::iter::repeat_n(a, d + 1));
        knots.extend(interior);
        knots.extend(core::iter::repeat_n(b, d + 1));
        Ok(Self { spec, knots })
    }

    pub fn spec(&self) -> &SplineSpec {
        &self.spec
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.spec.degree
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn domain(&self) -> (f64, f64) {
        self.spec.domain
    }

    /// Index `mu` of the knot span `[t_mu, t_mu+1)` holding `x`; the right
    /// boundary belongs to the last non-empty span.
    fn span(&self, x: f64) -> usize {
        let d = self.spec.degree;
        let last = self.dim() - 1;
        if x >= self.knots[last + 1] {
            return last;
        }
        // knots[d..=last+1] is nondecreasing; find the last t_mu <= x.
        let upper = self.knots[d..=last + 1].partition_point(|&t| t <= x);
        (d + upper - 1).clamp(d, last)
    }

    /// Writes all basis values at `x` into `out` (length `dim()`), returning
    /// the index of the first possibly-nonzero function. Returns `true` in the
    /// second slot if `x` lay outside the domain and was clamped.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) -> (usize, bool) {
        debug_assert_eq!(out.len(), self.dim());
        let (a, b) = self.spec.domain;
        let clamped = !(a..=b).contains(&x);
        let x = x.clamp(a, b);
        let d = self.spec.degree;
        let mu = self.span(x);
        let t = &self.knots;

        let mut n = vec![0.0; d + 1];
        let mut left = vec![0.0; d + 1];
        let mut right = vec![0.0; d + 1];
        n[0] = 1.0;
        for j in 1..=d {
            left[j] = x - t[mu + 1 - j];
            right[j] = t[mu + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { n[r] / denom };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        out.fill(0.0);
        let first = mu - d;
        out[first..=mu].copy_from_slice(&n);
        (first, clamped)
    }

    /// All `dim()` basis values at `x`; out-of-range `x` is clamped.
    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out);
        out
    }

    /// Row `t` holds the basis values at `xs[t]`.
    pub fn design_matrix(&self, xs: &[f64]) -> DMatrix<f64> {
        let k = self.dim();
        let mut m = DMatrix::zeros(xs.len(), k);
        let mut row = vec![0.0; k];
        let mut clamped = 0usize;
        for (t, &x) in xs.iter().enumerate() {
            if self.eval_into(x, &mut row).1 {
                clamped += 1;
            }
            for (l, v) in row.iter().enumerate() {
                m[(t, l)] = *v;
            }
        }
        if clamped > 0 {
            log::warn!("{clamped} evaluation points outside the spline domain were clamped");
        }
        m
    }

    /// Evaluates `sum_l gamma_l B_l(x)` on every grid point.
    pub fn eval_component(&self, gamma: &[f64], grid: &[f64]) -> Result<Vec<f64>, SplineError> {
        if gamma.len() != self.dim() {
            return Err(SplineError::DimensionMismatch {
                expected: self.dim(),
                found: gamma.len(),
            });
        }
        let mut row = vec![0.0; self.dim()];
        Ok(grid
            .iter()
            .map(|&x| {
                let (first, _) = self.eval_into(x, &mut row);
                let last = (first + self.degree()).min(self.dim() - 1);
                (first..=last).map(|l| row[l] * gamma[l]).sum()
            })
            .collect())
    }

    /// `points` equally spaced values spanning the domain, endpoints included.
    pub fn grid(&self, points: usize) -> Vec<f64> {
        uniform_grid(self.spec.domain, points)
    }
}

pub fn uniform_grid((a, b): (f64, f64), points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..points)
            .map(|i| {
                if i + 1 == points {
                    b
                } else {
                    a + (b - a) * i as f64 / (points - 1) as f64
                }
            })
            .collect(),
    }
}

/// Linear-interpolation sample quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn strictly_inside(knots: &[f64], a: f64, b: f64) -> bool {
    knots.first().is_none_or(|&k| k > a)
        && knots.last().is_none_or(|&k| k < b)
        && knots.windows(2).all(|w| w[0] < w[1])
}
