use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{log_sum_exp, trapezoid_weights};

/// A log density tabulated on a tensor grid, normalized by the trapezoid
/// rule. Values are stored row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPosterior {
    pub names: Vec<String>,
    pub axes: Vec<Vec<f64>>,
    pub log_density: Vec<f64>,
    /// Log of the trapezoid integral of `exp(log_density)`.
    pub log_norm: f64,
}

impl GridPosterior {
    pub fn new(names: Vec<String>, axes: Vec<Vec<f64>>, log_density: Vec<f64>) -> Result<Self> {
        if names.len() != axes.len() {
            return Err(Error::Dimension { expected: axes.len(), got: names.len() });
        }
        let size: usize = axes.iter().map(Vec::len).product();
        if log_density.len() != size {
            return Err(Error::Dimension { expected: size, got: log_density.len() });
        }
        for a in &axes {
            if a.len() < 2 || a.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Domain("grid axes need at least two strictly increasing points".into()));
            }
        }
        if log_density.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::Domain("grid log density contains NaN or +inf".into()));
        }
        let weights = tensor_weights(&axes);
        let log_norm = log_sum_exp(log_density.iter().zip(&weights).map(|(l, w)| l + w.ln()));
        if !log_norm.is_finite() {
            return Err(Error::Domain("grid density vanishes everywhere".into()));
        }
        let g = Self { names, axes, log_density, log_norm };
        g.warn_if_coarse();
        Ok(g)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    /// Normalized density at every node.
    pub fn density(&self) -> Vec<f64> {
        self.log_density.iter().map(|l| (l - self.log_norm).exp()).collect()
    }

    /// Grid coordinates of the highest node.
    pub fn mode(&self) -> Vec<f64> {
        let best = self
            .log_density
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &l)| if l > acc.1 { (i, l) } else { acc })
            .0;
        unravel(best, &self.shape())
            .into_iter()
            .zip(&self.axes)
            .map(|(i, a)| a[i])
            .collect()
    }

    /// Marginal density along `axis`, integrating the others by trapezoid.
    pub fn marginal(&self, axis: usize) -> Marginal {
        let shape = self.shape();
        let weights: Vec<Vec<f64>> = self.axes.iter().map(|a| trapezoid_weights(a)).collect();
        let mut out = vec![0.0; shape[axis]];
        for (flat, d) in self.density().into_iter().enumerate() {
            let idx = unravel(flat, &shape);
            let w: f64 = idx
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != axis)
                .map(|(k, &i)| weights[k][i])
                .product();
            out[idx[axis]] += w * d;
        }
        Marginal::new(self.axes[axis].clone(), out).expect("normalized grid has positive mass")
    }

    fn warn_if_coarse(&self) {
        for k in 0..self.axes.len() {
            let m = self.marginal(k);
            let peak = m.density.iter().cloned().fold(0.0, f64::max);
            let edge = m.density[0].max(*m.density.last().unwrap());
            if edge > 1e-3 * peak {
                log::warn!("posterior of {} has mass at the grid edge", self.names[k]);
            }
            if m.node_probabilities().iter().any(|p| *p > 0.5) {
                log::warn!("grid for {} is too coarse to resolve the posterior", self.names[k]);
            }
        }
    }
}

fn tensor_weights(axes: &[Vec<f64>]) -> Vec<f64> {
    let per_axis: Vec<Vec<f64>> = axes.iter().map(|a| trapezoid_weights(a)).collect();
    let shape: Vec<usize> = axes.iter().map(Vec::len).collect();
    let size: usize = shape.iter().product();
    (0..size)
        .map(|flat| {
            unravel(flat, &shape)
                .iter()
                .zip(&per_axis)
                .map(|(&i, w)| w[i])
                .product()
        })
        .collect()
}

fn unravel(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for k in (0..shape.len()).rev() {
        idx[k] = flat % shape[k];
        flat /= shape[k];
    }
    idx
}

/// A one-dimensional density, linear between nodes, integrating to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Marginal {
    pub axis: Vec<f64>,
    pub density: Vec<f64>,
}

impl Marginal {
    /// Normalizes non-negative `values` on `axis`.
    pub fn new(axis: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if axis.len() != values.len() || axis.len() < 2 {
            return Err(Error::Dimension { expected: axis.len(), got: values.len() });
        }
        let total: f64 = trapezoid_weights(&axis).iter().zip(&values).map(|(w, v)| w * v).sum();
        if !(total > 0.0 && total.is_finite()) || values.iter().any(|v| *v < 0.0) {
            return Err(Error::Domain("marginal density must be non-negative with positive mass".into()));
        }
        Ok(Self { density: values.into_iter().map(|v| v / total).collect(), axis })
    }

    /// Normalizes `exp(log_values)` on `axis`.
    pub fn from_log(axis: Vec<f64>, log_values: &[f64]) -> Result<Self> {
        let top = log_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Self::new(axis, log_values.iter().map(|l| (l - top).exp()).collect())
    }

    fn cell_mass(&self, i: usize, x: f64) -> f64 {
        // ∫_{x_i}^{x} of the linear interpolant
        let (x0, x1) = (self.axis[i], self.axis[i + 1]);
        let (f0, f1) = (self.density[i], self.density[i + 1]);
        let t = x - x0;
        let slope = (f1 - f0) / (x1 - x0);
        f0 * t + 0.5 * slope * t * t
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.axis[0] {
            return 0.0;
        }
        if x >= *self.axis.last().unwrap() {
            return 1.0;
        }
        let i = self.axis.partition_point(|a| *a <= x) - 1;
        let below: f64 = (0..i).map(|j| self.cell_mass(j, self.axis[j + 1])).sum();
        (below + self.cell_mass(i, x)).min(1.0)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        let mut acc = 0.0;
        for i in 0..self.axis.len() - 1 {
            let mass = self.cell_mass(i, self.axis[i + 1]);
            if acc + mass >= p && mass > 0.0 {
                let target = p - acc;
                let (x0, x1) = (self.axis[i], self.axis[i + 1]);
                let f0 = self.density[i];
                let slope = (self.density[i + 1] - f0) / (x1 - x0);
                if target <= 0.0 {
                    return x0;
                }
                // root of f0 t + slope t²/2 = target, in cancellation-free form
                let disc = (f0 * f0 + 2.0 * slope * target).max(0.0).sqrt();
                let t = 2.0 * target / (f0 + disc);
                return (x0 + t).clamp(x0, x1);
            }
            acc += mass;
        }
        *self.axis.last().unwrap()
    }

    pub fn mean(&self) -> f64 {
        self.axis
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, f)| (x[1] - x[0]) / 6.0 * (f[0] * (2.0 * x[0] + x[1]) + f[1] * (x[0] + 2.0 * x[1])))
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let second: f64 = self
            .axis
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, f)| {
                let (a, b) = (x[0], x[1]);
                (b - a) / 12.0 * (f[0] * (3.0 * a * a + 2.0 * a * b + b * b) + f[1] * (a * a + 2.0 * a * b + 3.0 * b * b))
            })
            .sum();
        second - self.mean().powi(2)
    }

    pub fn mode(&self) -> f64 {
        let i = self
            .density
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc })
            .0;
        self.axis[i]
    }

    /// Kolmogorov-Smirnov distance between the empirical distribution of
    /// `samples` and this continuous density.
    pub fn ks_distance(&self, samples: &[f64]) -> f64 {
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len() as f64;
        s.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = self.cdf(x);
                ((i + 1) as f64 / n - f).max(f - i as f64 / n)
            })
            .fold(0.0, f64::max)
    }

    /// Probability of each node when the density is discretized with
    /// trapezoid weights.
    pub fn node_probabilities(&self) -> Vec<f64> {
        let w = trapezoid_weights(&self.axis);
        let p: Vec<f64> = w.iter().zip(&self.density).map(|(w, d)| w * d).collect();
        let total: f64 = p.iter().sum();
        p.into_iter().map(|v| v / total).collect()
    }

    /// Index of a node drawn from [`node_probabilities`](Self::node_probabilities).
    pub fn sample_node<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.node_probabilities(), rng)
    }

    /// KS distance between `samples` (node values) and the discretized
    /// node distribution.
    pub fn ks_distance_discrete(&self, samples: &[f64]) -> f64 {
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len() as f64;
        let mut cum = 0.0;
        let mut worst: f64 = 0.0;
        for (x, p) in self.axis.iter().zip(self.node_probabilities()) {
            cum += p;
            let emp = s.partition_point(|v| v <= x) as f64 / n;
            worst = worst.max((emp - cum).abs());
        }
        worst
    }
}

pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
