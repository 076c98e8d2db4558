//! Discrete Legendre-Fenchel transforms on product grids.

use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

/// Slack for comparing a boundary maximizer with its inward neighbour.
const BOUNDARY_TOL: f64 = 1e-12;

/// Tolerance on discrete second differences in the convexity certificate.
pub const CONVEXITY_TOL: f64 = 1e-12;

/// Cartesian product of one-dimensional grids. Points are enumerated in
/// row-major order, the last axis varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductGrid {
    axes: Vec<Vec<f64>>,
}

/// Points `a, a+step, ...` up to `b` inclusive (with a little slack).
pub fn linspace_step(a: f64, b: f64, step: f64) -> Result<Vec<f64>> {
    if !(a.is_finite() && b.is_finite() && step.is_finite()) || step <= 0.0 || b < a {
        return Err(Error::InvalidArgument(format!("bad grid {a}:{b}:{step}")));
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    if n > 1_000_000 {
        return Err(Error::InvalidArgument("grid too fine".into()));
    }
    Ok((0..=n).map(|k| a + k as f64 * step).collect())
}

impl ProductGrid {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(|a| a.is_empty()) {
            return Err(Error::EmptyGrid);
        }
        for a in &axes {
            if a.iter().any(|v| !v.is_finite()) || a.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidArgument(
                    "grid axes must be finite and strictly increasing".into(),
                ));
            }
        }
        Ok(Self { axes })
    }

    /// The same axis repeated `dim` times.
    pub fn uniform(axis: Vec<f64>, dim: usize) -> Result<Self> {
        Self::new(vec![axis; dim])
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for (d, a) in self.axes.iter().enumerate().rev() {
            idx[d] = flat % a.len();
            flat /= a.len();
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, a)| acc * a.len() + i)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a[i])
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    /// Flat index of the grid point equal to `p` (within `tol` per axis).
    pub fn find(&self, p: &[f64], tol: f64) -> Option<usize> {
        if p.len() != self.dim() {
            return None;
        }
        let mut idx = Vec::with_capacity(p.len());
        for (v, a) in p.iter().zip(&self.axes) {
            idx.push(a.iter().position(|g| (g - v).abs() <= tol)?);
        }
        Some(self.flat_index(&idx))
    }

    /// Spacing of each axis (largest gap).
    pub fn spacing(&self) -> Vec<f64> {
        self.axes
            .iter()
            .map(|a| a.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max))
            .collect()
    }
}

impl FromStr for ProductGrid {
    type Err = Error;

    /// One `a:b:step` axis, or several separated by `,`.
    fn from_str(s: &str) -> Result<Self> {
        let mut axes = Vec::new();
        for part in s.split(',') {
            let f: Vec<&str> = part.trim().split(':').collect();
            if f.len() != 3 {
                return Err(Error::InvalidArgument(format!(
                    "grid axis `{part}` is not a:b:step"
                )));
            }
            let num = |x: &str| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("bad number `{x}` in grid")))
            };
            axes.push(linspace_step(num(f[0])?, num(f[1])?, num(f[2])?)?);
        }
        Self::new(axes)
    }
}

/// `I(x) = max over grid points of (lambda . x - f(lambda))`.
///
/// Non-finite entries of `f` are excluded. A maximizer sitting on the edge
/// of the lambda grid that strictly beats its inward neighbour means the
/// supremum lies outside the grid; such points get `+inf`.
pub fn legendre_fenchel(lambda: &ProductGrid, f: &[f64], x: &ProductGrid) -> Result<Vec<f64>> {
    Ok(legendre_fenchel_argmax(lambda, f, x)?
        .into_iter()
        .map(|(v, _)| v)
        .collect())
}

/// As [`legendre_fenchel`], also returning the flat index of the
/// maximizing lambda for each x.
pub fn legendre_fenchel_argmax(
    lambda: &ProductGrid,
    f: &[f64],
    x: &ProductGrid,
) -> Result<Vec<(f64, usize)>> {
    if lambda.is_empty() || x.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if f.len() != lambda.len() || lambda.dim() != x.dim() {
        return Err(Error::InvalidArgument(
            "function values do not match the grid".into(),
        ));
    }
    if f.iter().all(|v| !v.is_finite()) {
        return Err(Error::EmptyGrid);
    }
    let lpts = lambda.points();
    let shape = lambda.shape();
    let mut out = Vec::with_capacity(x.len());
    for xp in x.points() {
        let obj = |k: usize| -> f64 {
            if f[k].is_finite() {
                lpts[k].iter().zip(&xp).map(|(l, x)| l * x).sum::<f64>() - f[k]
            } else {
                f64::NEG_INFINITY
            }
        };
        let (best_k, best) =
            (0..lpts.len())
                .map(|k| (k, obj(k)))
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, v| if v.1 > acc.1 { v } else { acc },
                );
        let idx = lambda.multi_index(best_k);
        let mut escapes = false;
        for d in 0..idx.len() {
            if shape[d] < 2 {
                continue;
            }
            let inward = if idx[d] == 0 {
                Some(1)
            } else if idx[d] == shape[d] - 1 {
                Some(shape[d] - 2)
            } else {
                None
            };
            if let Some(j) = inward {
                let mut nb = idx.clone();
                nb[d] = j;
                let v = obj(lambda.flat_index(&nb));
                if best > v + BOUNDARY_TOL * (1.0 + best.abs()) {
                    escapes = true;
                }
            }
        }
        out.push((if escapes { f64::INFINITY } else { best }, best_k));
    }
    Ok(out)
}

/// Worst-case discretisation error of a grid maximum: for each axis, one
/// eighth of the largest discrete second difference, summed over axes.
pub fn grid_error_bound(grid: &ProductGrid, values: &[f64]) -> f64 {
    let mut total = 0.0;
    for d in 0..grid.dim() {
        total += max_second_difference(grid, values, d).max(0.0) / 8.0;
    }
    total
}

/// Largest and smallest discrete second differences along axis `d`,
/// normalised to the local spacing. Infinite values are skipped.
fn second_differences(grid: &ProductGrid, values: &[f64], d: usize) -> Vec<f64> {
    let shape = grid.shape();
    let axis = &grid.axes()[d];
    let mut out = Vec::new();
    if shape[d] < 3 {
        return out;
    }
    for k in 0..grid.len() {
        let idx = grid.multi_index(k);
        let i = idx[d];
        if i == 0 || i + 1 >= shape[d] {
            continue;
        }
        let mut lo = idx.clone();
        lo[d] = i - 1;
        let mut hi = idx.clone();
        hi[d] = i + 1;
        let (a, b, c) = (
            values[grid.flat_index(&lo)],
            values[k],
            values[grid.flat_index(&hi)],
        );
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            continue;
        }
        let (h1, h2) = (axis[i] - axis[i - 1], axis[i + 1] - axis[i]);
        // rescale to the equal-spacing form a - 2b + c at spacing max(h1, h2)
        let h = h1.max(h2);
        let second = 2.0 * (h1 * c - (h1 + h2) * b + h2 * a) / (h1 * h2 * (h1 + h2));
        out.push(second * h * h);
    }
    out
}

fn max_second_difference(grid: &ProductGrid, values: &[f64], d: usize) -> f64 {
    second_differences(grid, values, d)
        .into_iter()
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvexityCertificate {
    pub convex: bool,
    /// Smallest second difference seen (0 when there are none).
    pub min_second_difference: f64,
}

/// Convexity along every axis: second differences at least `-1e-12`
/// relative to the magnitude of the values involved.
pub fn convexity_certificate(grid: &ProductGrid, values: &[f64]) -> ConvexityCertificate {
    let scale = values
        .iter()
        .filter(|v| v.is_finite())
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let min = (0..grid.dim())
        .flat_map(|d| second_differences(grid, values, d))
        .fold(0.0, f64::min);
    ConvexityCertificate {
        convex: min >= -CONVEXITY_TOL * scale,
        min_second_difference: min,
    }
}
