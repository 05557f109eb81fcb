//! Categorical distributions, information measures and the generalized inner
//! product over named tensor axes.
//!
//! Every logarithm in the crate goes through [`ln_clamped`], which floors its
//! argument at [`PROB_FLOOR`]. One-hot observations and deterministic
//! transition tensors therefore produce large negative (but finite) logits.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fmt;
use std::ops::Deref;

use crate::error::{invalid, Result};

/// Smallest probability allowed inside a logarithm.
pub const PROB_FLOOR: f64 = 1e-32;

/// Tolerance used when checking that a vector or a tensor column is normalized.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[inline]
pub fn ln_clamped(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

/// Name of a tensor axis, e.g. `"obs"` or `"next_state"`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Dim(Cow<'static, str>);

impl Dim {
    pub const fn from_static(name: &'static str) -> Self {
        Dim(Cow::Borrowed(name))
    }

    pub fn new(name: impl Into<String>) -> Self {
        Dim(Cow::Owned(name.into()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub mod dims {
    use super::Dim;

    pub const OBS: Dim = Dim::from_static("obs");
    pub const STATE: Dim = Dim::from_static("state");
    pub const NEXT_STATE: Dim = Dim::from_static("next_state");
    pub const PREV_STATE: Dim = Dim::from_static("prev_state");
    pub const ACTION: Dim = Dim::from_static("action");
}

/// A validated categorical distribution along one named dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Categorical {
    probs: Vec<f64>,
    dim: Dim,
}

impl Categorical {
    pub fn new(dim: Dim, probs: Vec<f64>) -> Result<Self> {
        check_distribution(&probs)?;
        Ok(Self { probs, dim })
    }

    pub fn uniform(dim: Dim, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(invalid("uniform distribution over an empty support"));
        }
        Ok(Self {
            probs: vec![1.0 / size as f64; size],
            dim,
        })
    }

    pub fn one_hot(dim: Dim, index: usize, size: usize) -> Result<Self> {
        Ok(Self {
            probs: one_hot(index, size)?,
            dim,
        })
    }

    /// `softmax(precision * values)` labelled with `dim`.
    pub fn softmax(dim: Dim, values: &[f64], precision: f64) -> Result<Self> {
        Ok(Self {
            probs: softmax(values, precision)?,
            dim,
        })
    }

    pub fn dim(&self) -> &Dim {
        &self.dim
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }
}

impl Deref for Categorical {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.probs
    }
}

/// Checks non-negativity and normalization within [`NORMALIZATION_TOL`].
pub fn check_distribution(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(invalid("empty probability vector"));
    }
    if let Some(i) = probs.iter().position(|p| !p.is_finite() || *p < 0.0) {
        return Err(invalid(format!(
            "entry {i} is not a probability: {}",
            probs[i]
        )));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(invalid(format!("probabilities sum to {sum}, expected 1")));
    }
    Ok(())
}

/// `σ(precision · values)`.
pub fn softmax(values: &[f64], precision: f64) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(invalid("softmax of an empty vector"));
    }
    if !precision.is_finite() || precision < 0.0 {
        return Err(invalid(format!("precision must be finite and >= 0, got {precision}")));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(invalid(format!("softmax input is not finite: {v}")));
    }
    let mut out: Vec<f64> = values.iter().map(|v| precision * v).collect();
    normalize_logits(&mut out);
    Ok(out)
}

/// Turns finite logits into probabilities in place (max-shifted for stability).
pub fn normalize_logits(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

/// `KL[p || q]` in nats, with `0 ln 0 := 0` and both sides clamped inside the log.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(invalid(format!(
            "KL divergence of vectors with lengths {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(kl_unchecked(p, q))
}

pub(crate) fn kl_unchecked(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (ln_clamped(*pi) - ln_clamped(*qi)))
        .sum()
}

/// Shannon entropy in nats.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|pi| **pi > 0.0)
        .map(|pi| pi * ln_clamped(*pi))
        .sum::<f64>()
}

/// Zero-based one-hot vector.
pub fn one_hot(index: usize, size: usize) -> Result<Vec<f64>> {
    if index >= size {
        return Err(invalid(format!("one-hot index {index} out of range for size {size}")));
    }
    let mut v = vec![0.0; size];
    v[index] = 1.0;
    Ok(v)
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Index of the smallest entry; the first one wins ties.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Dense row-major tensor whose axes carry names.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    values: Vec<f64>,
    shape: Vec<usize>,
    dims: Vec<Dim>,
}

impl NamedTensor {
    pub fn new(dims: Vec<Dim>, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if dims.len() != shape.len() {
            return Err(invalid(format!(
                "{} dimension names for a rank-{} shape",
                dims.len(),
                shape.len()
            )));
        }
        for (i, d) in dims.iter().enumerate() {
            if dims[..i].contains(d) {
                return Err(invalid(format!("duplicate dimension name `{d}`")));
            }
        }
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(invalid(format!(
                "shape {shape:?} needs {expected} values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            values,
            shape,
            dims,
        })
    }

    /// Builds a tensor by evaluating `f` at every multi-index (row-major order).
    pub fn from_fn(dims: Vec<Dim>, shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len: usize = shape.iter().product();
        let mut values = Vec::with_capacity(len);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..len {
            values.push(f(&idx));
            increment(&mut idx, &shape);
        }
        Self::new(dims, shape, values)
    }

    pub fn zeros(dims: Vec<Dim>, shape: Vec<usize>) -> Result<Self> {
        let len = shape.iter().product();
        Self::new(dims, shape, vec![0.0; len])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dims(&self) -> &[Dim] {
        &self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn axis_of(&self, dim: &Dim) -> Option<usize> {
        self.dims.iter().position(|d| d == dim)
    }

    fn offset(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.shape)
            .fold(0, |acc, (i, n)| acc * n + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let o = self.offset(idx);
        self.values[o] = value;
    }

    /// Element-wise map, keeping axis names.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|v| f(*v)).collect(),
            shape: self.shape.clone(),
            dims: self.dims.clone(),
        }
    }

    /// Generalized inner product `W ⊙ [V¹, …, Vᴹ]`: weighted sum over every
    /// axis matched by a factor, returning a vector along the one axis left
    /// unmatched.
    pub fn inner_product(&self, factors: &[(Dim, &[f64])]) -> Result<Vec<f64>> {
        let mut axis_factor: Vec<Option<&[f64]>> = vec![None; self.rank()];
        for (dim, v) in factors {
            let axis = self
                .axis_of(dim)
                .ok_or_else(|| invalid(format!("tensor has no dimension named `{dim}`")))?;
            if axis_factor[axis].is_some() {
                return Err(invalid(format!("dimension `{dim}` matched twice")));
            }
            if v.len() != self.shape[axis] {
                return Err(invalid(format!(
                    "factor for `{dim}` has length {}, axis extent is {}",
                    v.len(),
                    self.shape[axis]
                )));
            }
            axis_factor[axis] = Some(v);
        }
        let free: Vec<usize> = (0..self.rank()).filter(|a| axis_factor[*a].is_none()).collect();
        if free.len() != 1 {
            return Err(invalid(format!(
                "inner product must leave exactly one free axis, {} left",
                free.len()
            )));
        }
        let free = free[0];
        let mut out = vec![0.0; self.shape[free]];
        let mut idx = vec![0usize; self.rank()];
        for value in &self.values {
            let mut w = *value;
            for (axis, f) in axis_factor.iter().enumerate() {
                if let Some(f) = f {
                    w *= f[idx[axis]];
                }
            }
            out[idx[free]] += w;
            increment(&mut idx, &self.shape);
        }
        Ok(out)
    }
}

fn increment(idx: &mut [usize], shape: &[usize]) {
    for axis in (0..idx.len()).rev() {
        idx[axis] += 1;
        if idx[axis] < shape[axis] {
            return;
        }
        idx[axis] = 0;
    }
}

/// Element-wise clamped log of a probability matrix, stored as a shared floor
/// value plus sparse per-entry offsets.
///
/// Deterministic or near-deterministic likelihood and transition matrices have
/// one dominant log value (the log of the floor or of the noise level), so a
/// contraction costs `O(rows + cols + non-floor entries)` instead of
/// `O(rows · cols)`.
#[derive(Clone, Debug)]
pub struct FlooredLogMatrix {
    rows: usize,
    cols: usize,
    floor: f64,
    by_col: Vec<Vec<(usize, f64)>>,
    by_row: Vec<Vec<(usize, f64)>>,
}

impl FlooredLogMatrix {
    /// `entry(r, c)` yields the probability at row `r`, column `c`.
    pub fn from_probs(rows: usize, cols: usize, entry: impl Fn(usize, usize) -> f64) -> Self {
        let logs: Vec<f64> = (0..rows * cols)
            .map(|k| ln_clamped(entry(k / cols, k % cols)))
            .collect();
        let mut counts: HashMap<u64, usize> = HashMap::new();
        for v in &logs {
            *counts.entry(v.to_bits()).or_default() += 1;
        }
        let floor = counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then_with(|| f64::from_bits(*b.0).total_cmp(&f64::from_bits(*a.0))))
            .map(|(bits, _)| f64::from_bits(*bits))
            .unwrap_or(0.0);
        let mut by_col = vec![Vec::new(); cols];
        let mut by_row = vec![Vec::new(); rows];
        for (k, v) in logs.iter().enumerate() {
            if v.to_bits() != floor.to_bits() {
                let (r, c) = (k / cols, k % cols);
                by_col[c].push((r, v - floor));
                by_row[r].push((c, v - floor));
            }
        }
        Self {
            rows,
            cols,
            floor,
            by_col,
            by_row,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.by_row[row]
            .iter()
            .find(|(c, _)| *c == col)
            .map_or(self.floor, |(_, d)| self.floor + d)
    }

    /// `out[c] += scale · Σ_r weights[r] · L[r, c]`.
    pub fn accumulate_over_rows(&self, weights: &[f64], scale: f64, out: &mut [f64]) {
        debug_assert_eq!(weights.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        let base = scale * self.floor * weights.iter().sum::<f64>();
        for (c, o) in out.iter_mut().enumerate() {
            let mut acc = base;
            for (r, d) in &self.by_col[c] {
                acc += scale * weights[*r] * d;
            }
            *o += acc;
        }
    }

    /// `out[r] += scale · Σ_c weights[c] · L[r, c]`.
    pub fn accumulate_over_cols(&self, weights: &[f64], scale: f64, out: &mut [f64]) {
        debug_assert_eq!(weights.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        let base = scale * self.floor * weights.iter().sum::<f64>();
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = base;
            for (c, d) in &self.by_row[r] {
                acc += scale * weights[*c] * d;
            }
            *o += acc;
        }
    }

    /// `out[c] += scale · L[row, c]`, i.e. contraction with a one-hot over rows.
    pub fn accumulate_row(&self, row: usize, scale: f64, out: &mut [f64]) {
        for o in out.iter_mut() {
            *o += scale * self.floor;
        }
        for (c, d) in &self.by_row[row] {
            out[*c] += scale * d;
        }
    }
}
