//! Desk-scale objective functions and synthetic data.
//!
//! Four objective kinds: an ill-conditioned quadratic and extended Rosenbrock
//! (analytic gradients, closed form), and logistic regression / a small MLP
//! on Gaussian blob data (gradients via the tape). Every kind can also build
//! a [`Tape`] of its loss, so backward-seed properties are testable across
//! the whole family.
//!
//! All randomness flows through [`RngState`]; identical seeds reproduce
//! datasets, bases, and initializations bitwise.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::param::{Gradient, ParamVector};
use crate::rng::{uniform_draw, RngState};
use crate::tape::{Tape, Value};
use crate::Result;

/// Fill `out` with standard Gaussian draws (Box-Muller pairs, in order).
fn gaussian_fill(mut rng: RngState, out: &mut [f64]) -> RngState {
    let mut i = 0;
    while i < out.len() {
        let (z1, z2, next) = rng.next_gaussian_pair();
        rng = next;
        out[i] = z1;
        if i + 1 < out.len() {
            out[i + 1] = z2;
        }
        i += 2;
    }
    rng
}

/// Fill `out` with uniform draws in `[low, high)`.
fn uniform_fill(mut rng: RngState, low: f64, high: f64, out: &mut [f64]) -> RngState {
    for slot in out.iter_mut() {
        let (v, next) = uniform_draw(rng, low, high).expect("caller passes low < high");
        *slot = v;
        rng = next;
    }
    rng
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// A fixed synthetic classification dataset (features row-major, n x dim).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    n: usize,
    dim: usize,
    classes: usize,
    generator_seed: u64,
    /// Class centers (classes x dim) when generated by [`gen_blobs`]; absent
    /// for imported datasets.
    centers: Option<Vec<f64>>,
}

impl Dataset {
    /// Build a dataset from raw parts (e.g. a CSV import).
    pub fn from_parts(
        features: Vec<f64>,
        labels: Vec<usize>,
        dim: usize,
        classes: usize,
        generator_seed: u64,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::invalid("dataset must have at least one sample"));
        }
        if dim == 0 {
            return Err(Error::invalid("dataset dim must be >= 1"));
        }
        if classes < 2 {
            return Err(Error::invalid("dataset needs at least 2 classes"));
        }
        if features.len() != n * dim {
            return Err(Error::DimMismatch {
                expected: n * dim,
                got: features.len(),
            });
        }
        if let Some(bad) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "feature entry {bad} is not finite"
            )));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::invalid(format!(
                "label {l} at sample {i} out of range for {classes} classes"
            )));
        }
        Ok(Dataset {
            features,
            labels,
            n,
            dim,
            classes,
            generator_seed,
            centers: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn generator_seed(&self) -> u64 {
        self.generator_seed
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Generating class centers (classes x dim, row-major), if known.
    pub fn centers(&self) -> Option<&[f64]> {
        self.centers.as_deref()
    }

    /// Fraction of samples whose nearest generating center has their label.
    ///
    /// This is the closed-form optimal linear classifier for isotropic
    /// Gaussian classes; it serves as the separability oracle in tests.
    pub fn nearest_center_accuracy(&self) -> Option<f64> {
        let centers = self.centers.as_deref()?;
        let mut correct = 0usize;
        for i in 0..self.n {
            let row = self.feature_row(i);
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for c in 0..self.classes {
                let center = &centers[c * self.dim..(c + 1) * self.dim];
                let d: f64 = row.iter().zip(center).map(|(x, m)| (x - m) * (x - m)).sum();
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if best == self.labels[i] {
                correct += 1;
            }
        }
        Some(correct as f64 / self.n as f64)
    }
}

/// Gaussian blobs: class centers on a seeded random sphere of radius
/// `separation`, unit isotropic noise per sample, labels balanced within 1.
///
/// `separation` may be 0, in which case labels are independent of features
/// (useful as a negative control).
pub fn gen_blobs(
    n: usize,
    dim: usize,
    classes: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("gen_blobs needs n >= 1"));
    }
    if dim == 0 {
        return Err(Error::invalid("gen_blobs needs dim >= 1"));
    }
    if classes < 2 {
        return Err(Error::invalid("gen_blobs needs classes >= 2"));
    }
    if n < classes {
        return Err(Error::invalid(format!(
            "gen_blobs needs n >= classes, got n={n}, classes={classes}"
        )));
    }
    if !(separation.is_finite() && separation >= 0.0) {
        return Err(Error::invalid(format!(
            "separation must be finite and >= 0, got {separation}"
        )));
    }

    let mut rng = RngState::new(seed);

    // Centers first, then per-sample noise: the draw order is part of the
    // bitwise-reproducibility contract.
    let mut centers = vec![0.0; classes * dim];
    for c in 0..classes {
        let row = &mut centers[c * dim..(c + 1) * dim];
        rng = gaussian_fill(rng, row);
        let norm = crate::math::sqrt(row.iter().map(|v| v * v).sum());
        if norm > 0.0 {
            for v in row.iter_mut() {
                *v *= separation / norm;
            }
        }
    }

    let mut features = vec![0.0; n * dim];
    let mut labels = vec![0usize; n];
    for i in 0..n {
        let label = i % classes;
        labels[i] = label;
        let row = &mut features[i * dim..(i + 1) * dim];
        rng = gaussian_fill(rng, row);
        let center = &centers[label * dim..(label + 1) * dim];
        for (v, m) in row.iter_mut().zip(center) {
            *v += m;
        }
    }

    Ok(Dataset {
        features,
        labels,
        n,
        dim,
        classes,
        generator_seed: seed,
        centers: Some(centers),
    })
}

/// A mini-batch: sample indices into a [`Dataset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    indices: Vec<usize>,
}

impl Batch {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn size(&self) -> usize {
        self.indices.len()
    }
}

/// Draw `b` indices without replacement (seeded Fisher-Yates prefix).
pub fn sample_batch(dataset: &Dataset, b: usize, mut rng: RngState) -> Result<(Batch, RngState)> {
    let n = dataset.n();
    if b == 0 || b > n {
        return Err(Error::invalid(format!(
            "batch size must satisfy 1 <= B <= n, got B={b}, n={n}"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..b {
        let (r, next) = rng.next();
        rng = next;
        let j = i + (r % (n - i) as u64) as usize;
        indices.swap(i, j);
    }
    indices.truncate(b);
    Ok((Batch { indices }, rng))
}

// ---------------------------------------------------------------------------
// Quadratic spec
// ---------------------------------------------------------------------------

/// An ill-conditioned positive-definite quadratic: f(x) = half x'Hx - b'x.
///
/// H has eigenvalues log-uniformly spaced in `[1, condition_number]` in a
/// seeded random orthonormal basis; `b` is chosen so the minimizer is a
/// seeded random point with entries in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSpec {
    dim: usize,
    condition_number: f64,
    eigenvalues: Vec<f64>,
    /// Dense row-major H, exactly symmetric by construction.
    hessian: Vec<f64>,
    linear_term: Vec<f64>,
    minimizer: Vec<f64>,
}

/// Seeded random orthonormal rows via modified Gram-Schmidt.
fn orthonormal_basis(dim: usize, mut rng: RngState) -> (Vec<f64>, RngState) {
    let mut q = Vec::with_capacity(dim * dim);
    let mut row = vec![0.0; dim];
    let mut k = 0;
    while k < dim {
        rng = gaussian_fill(rng, &mut row);
        for r in 0..k {
            let basis = &q[r * dim..(r + 1) * dim];
            let proj: f64 = basis.iter().zip(&row).map(|(a, b)| a * b).sum();
            for (v, a) in row.iter_mut().zip(basis) {
                *v -= proj * a;
            }
        }
        let norm = crate::math::sqrt(row.iter().map(|v| v * v).sum());
        // A degenerate draw (never in practice) is simply redrawn; the rng
        // stream keeps the whole procedure deterministic either way.
        if norm > 1e-8 {
            q.extend(row.iter().map(|v| v / norm));
            k += 1;
        }
    }
    (q, rng)
}

fn dense_matvec(matrix: &[f64], x: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (r, slot) in out.iter_mut().enumerate() {
        *slot = matrix[r * dim..(r + 1) * dim]
            .iter()
            .zip(x)
            .map(|(m, v)| m * v)
            .sum();
    }
    out
}

impl QuadraticSpec {
    pub fn new(dim: usize, condition_number: f64, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("quadratic needs dim >= 1"));
        }
        if !(condition_number.is_finite() && condition_number >= 1.0) {
            return Err(Error::invalid(format!(
                "condition_number must be finite and >= 1, got {condition_number}"
            )));
        }
        if dim == 1 && condition_number != 1.0 {
            return Err(Error::invalid(
                "dim=1 admits only condition_number=1 (a single eigenvalue)",
            ));
        }

        // Log-uniform eigenvalue grid on [1, kappa].
        let eigenvalues: Vec<f64> = if dim == 1 {
            vec![1.0]
        } else {
            let log_kappa = crate::math::ln(condition_number);
            (0..dim)
                .map(|i| crate::math::exp(log_kappa * i as f64 / (dim - 1) as f64))
                .collect()
        };

        let rng = RngState::new(seed);
        let (q, rng) = orthonormal_basis(dim, rng);

        // H = sum_k lambda_k q_k q_k', filled symmetrically entry by entry.
        let mut hessian = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let s: f64 = (0..dim)
                    .map(|k| eigenvalues[k] * q[k * dim + i] * q[k * dim + j])
                    .sum();
                hessian[i * dim + j] = s;
                hessian[j * dim + i] = s;
            }
        }

        let mut minimizer = vec![0.0; dim];
        uniform_fill(rng, -1.0, 1.0, &mut minimizer);
        let linear_term = dense_matvec(&hessian, &minimizer, dim);

        Ok(QuadraticSpec {
            dim,
            condition_number,
            eigenvalues,
            hessian,
            linear_term,
            minimizer,
        })
    }

    /// Diagonal H with the given eigenvalues and b = 0 (minimizer at the
    /// origin). Convenient for hand-computable oracle tests.
    pub fn axis_aligned(eigenvalues: Vec<f64>) -> Result<Self> {
        let dim = eigenvalues.len();
        if dim == 0 {
            return Err(Error::invalid("axis_aligned needs at least one eigenvalue"));
        }
        if eigenvalues.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return Err(Error::invalid("eigenvalues must be finite and > 0"));
        }
        let mut min = f64::INFINITY;
        let mut max = 0.0f64;
        for &l in &eigenvalues {
            min = min.min(l);
            max = max.max(l);
        }
        let mut hessian = vec![0.0; dim * dim];
        for (i, &l) in eigenvalues.iter().enumerate() {
            hessian[i * dim + i] = l;
        }
        Ok(QuadraticSpec {
            dim,
            condition_number: max / min,
            eigenvalues,
            hessian,
            linear_term: vec![0.0; dim],
            minimizer: vec![0.0; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn condition_number(&self) -> f64 {
        self.condition_number
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().cloned().fold(0.0, f64::max)
    }

    /// Dense row-major H.
    pub fn hessian_dense(&self) -> &[f64] {
        &self.hessian
    }

    pub fn linear_term(&self) -> &[f64] {
        &self.linear_term
    }

    pub fn minimizer(&self) -> &[f64] {
        &self.minimizer
    }
}

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

/// Hidden-layer nonlinearity for the MLP objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nonlinearity {
    Relu,
    Sigmoid,
}

/// MLP architecture: one hidden layer of `hidden` units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpSpec {
    pub hidden: usize,
    pub nonlinearity: Nonlinearity,
}

/// A differentiable training objective.
///
/// Analytic kinds (quadratic, Rosenbrock) have closed-form gradients that
/// bypass the tape; dataset kinds (logistic regression, MLP) backpropagate
/// through a tape built per evaluation. Every kind can build a tape, so
/// backward-seed linearity is testable uniformly.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Quadratic(QuadraticSpec),
    Rosenbrock { dim: usize },
    LogisticRegression { dataset: Dataset },
    Mlp { dataset: Dataset, spec: MlpSpec },
}

impl Objective {
    pub fn quadratic(dim: usize, condition_number: f64, seed: u64) -> Result<Self> {
        Ok(Objective::Quadratic(QuadraticSpec::new(
            dim,
            condition_number,
            seed,
        )?))
    }

    /// Extended Rosenbrock: independent 2-D Rosenbrock terms over disjoint
    /// consecutive pairs; requires an even dim.
    pub fn rosenbrock(dim: usize) -> Result<Self> {
        if dim < 2 || !dim.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "rosenbrock needs an even dim >= 2, got {dim}"
            )));
        }
        Ok(Objective::Rosenbrock { dim })
    }

    pub fn logistic_regression(dataset: Dataset) -> Result<Self> {
        Ok(Objective::LogisticRegression { dataset })
    }

    pub fn mlp(dataset: Dataset, hidden: usize, nonlinearity: Nonlinearity) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::invalid("mlp needs hidden >= 1"));
        }
        Ok(Objective::Mlp {
            dataset,
            spec: MlpSpec {
                hidden,
                nonlinearity,
            },
        })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Objective::Quadratic(_) => "quadratic",
            Objective::Rosenbrock { .. } => "rosenbrock",
            Objective::LogisticRegression { .. } => "logistic_regression",
            Objective::Mlp { .. } => "mlp",
        }
    }

    /// Number of trainable parameters.
    pub fn dim(&self) -> usize {
        match self {
            Objective::Quadratic(spec) => spec.dim,
            Objective::Rosenbrock { dim } => *dim,
            Objective::LogisticRegression { dataset } => dataset.classes() * (dataset.dim() + 1),
            Objective::Mlp { dataset, spec } => {
                (dataset.dim() + 1) * spec.hidden + (spec.hidden + 1) * dataset.classes()
            }
        }
    }

    /// True when the gradient has a closed form that bypasses the tape.
    pub fn is_analytic(&self) -> bool {
        matches!(self, Objective::Quadratic(_) | Objective::Rosenbrock { .. })
    }

    pub fn dataset(&self) -> Option<&Dataset> {
        match self {
            Objective::LogisticRegression { dataset } | Objective::Mlp { dataset, .. } => {
                Some(dataset)
            }
            _ => None,
        }
    }

    /// Seeded initial parameters.
    ///
    /// Analytic kinds start uniform in [-1, 1]^dim. Layered kinds use uniform
    /// [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer (biases included), drawn
    /// in parameter-layout order.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        let rng = RngState::new(seed);
        let mut values = vec![0.0; self.dim()];
        match self {
            Objective::Quadratic(_) | Objective::Rosenbrock { .. } => {
                uniform_fill(rng, -1.0, 1.0, &mut values);
            }
            Objective::LogisticRegression { dataset } => {
                let bound = 1.0 / crate::math::sqrt(dataset.dim() as f64);
                uniform_fill(rng, -bound, bound, &mut values);
            }
            Objective::Mlp { dataset, spec } => {
                let d = dataset.dim();
                let split = (d + 1) * spec.hidden;
                let bound1 = 1.0 / crate::math::sqrt(d as f64);
                let bound2 = 1.0 / crate::math::sqrt(spec.hidden as f64);
                let rng = uniform_fill(rng, -bound1, bound1, &mut values[..split]);
                uniform_fill(rng, -bound2, bound2, &mut values[split..]);
            }
        }
        ParamVector::new(values).expect("init draws are finite")
    }

    fn check_dim(&self, params: &ParamVector) -> Result<()> {
        if params.dim() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: params.dim(),
            });
        }
        Ok(())
    }

    fn batch_members<'a>(dataset: &Dataset, batch: Option<&'a Batch>) -> Result<BatchIter<'a>> {
        if let Some(b) = batch {
            if let Some(&bad) = b.indices().iter().find(|&&i| i >= dataset.n()) {
                return Err(Error::invalid(format!(
                    "batch index {bad} out of range for dataset of {}",
                    dataset.n()
                )));
            }
            Ok(BatchIter::Explicit(b.indices().iter()))
        } else {
            Ok(BatchIter::Full(0..dataset.n()))
        }
    }

    /// The objective value; dataset kinds average over `batch` (full dataset
    /// when `None`). Analytic kinds ignore `batch`.
    pub fn loss(&self, params: &ParamVector, batch: Option<&Batch>) -> Result<f64> {
        self.check_dim(params)?;
        let x = params.as_slice();
        match self {
            Objective::Quadratic(spec) => {
                let hx = dense_matvec(&spec.hessian, x, spec.dim);
                let xhx: f64 = x.iter().zip(&hx).map(|(a, b)| a * b).sum();
                let nbx: f64 = spec.linear_term.iter().zip(x).map(|(b, v)| -b * v).sum();
                Ok(0.5 * xhx + nbx)
            }
            Objective::Rosenbrock { dim } => {
                let mut total = 0.0;
                for w in 0..dim / 2 {
                    let (a, b) = (x[2 * w], x[2 * w + 1]);
                    let d1 = 1.0 - a;
                    let d2 = b - a * a;
                    total += d1 * d1 + 100.0 * d2 * d2;
                }
                Ok(total)
            }
            Objective::LogisticRegression { dataset } => {
                let members = Self::batch_members(dataset, batch)?;
                let mut total = 0.0;
                let mut count = 0usize;
                for i in members {
                    let logits = logreg_logits(dataset, x, i);
                    total += stable_xent(&logits, dataset.label(i));
                    count += 1;
                }
                Ok(total / count as f64)
            }
            Objective::Mlp { dataset, spec } => {
                let members = Self::batch_members(dataset, batch)?;
                let mut total = 0.0;
                let mut count = 0usize;
                for i in members {
                    let logits = mlp_logits(dataset, spec, x, i);
                    total += stable_xent(&logits, dataset.label(i));
                    count += 1;
                }
                Ok(total / count as f64)
            }
        }
    }

    /// Unscaled loss plus the gradient of `scale * loss`.
    ///
    /// Analytic kinds evaluate the closed form and multiply by `scale`;
    /// dataset kinds run backward with `scale` as the root adjoint seed —
    /// the two paths are the same mathematical object (backward linearity).
    pub fn loss_and_scaled_gradient(
        &self,
        params: &ParamVector,
        batch: Option<&Batch>,
        scale: f64,
    ) -> Result<(f64, Gradient)> {
        self.check_dim(params)?;
        if !scale.is_finite() {
            return Err(Error::NonFinite(format!("scale {scale} is not finite")));
        }
        let x = params.as_slice();
        match self {
            Objective::Quadratic(spec) => {
                let hx = dense_matvec(&spec.hessian, x, spec.dim);
                let xhx: f64 = x.iter().zip(&hx).map(|(a, b)| a * b).sum();
                let nbx: f64 = spec.linear_term.iter().zip(x).map(|(b, v)| -b * v).sum();
                let loss = 0.5 * xhx + nbx;
                let grad = Gradient::new(
                    hx.iter()
                        .zip(&spec.linear_term)
                        .map(|(h, b)| scale * (h - b))
                        .collect(),
                );
                Ok((loss, grad))
            }
            Objective::Rosenbrock { dim } => {
                let mut total = 0.0;
                let mut g = vec![0.0; *dim];
                for w in 0..dim / 2 {
                    let (a, b) = (x[2 * w], x[2 * w + 1]);
                    let d1 = 1.0 - a;
                    let d2 = b - a * a;
                    total += d1 * d1 + 100.0 * d2 * d2;
                    g[2 * w] = scale * (-2.0 * d1 - 400.0 * a * d2);
                    g[2 * w + 1] = scale * (200.0 * d2);
                }
                Ok((total, Gradient::new(g)))
            }
            Objective::LogisticRegression { .. } | Objective::Mlp { .. } => {
                let mut tape = self.build_tape(batch)?;
                let loss = tape.eval_forward(params)?;
                let grad = tape.backward_with_seed(scale)?;
                Ok((loss, grad))
            }
        }
    }

    /// Unscaled gradient (scale 1).
    pub fn gradient(&self, params: &ParamVector, batch: Option<&Batch>) -> Result<Gradient> {
        self.loss_and_scaled_gradient(params, batch, 1.0)
            .map(|(_, g)| g)
    }

    /// Build the loss tape for this objective over `batch`.
    ///
    /// Available for every kind (analytic ones included) so backward-seed
    /// properties can be exercised across the family.
    pub fn build_tape(&self, batch: Option<&Batch>) -> Result<Tape> {
        let mut t = Tape::new();
        match self {
            Objective::Quadratic(spec) => {
                let d = spec.dim;
                let x = t.input_vector(0, d);
                let h = t.constant(Value::matrix(d, d, spec.hessian.clone()));
                let hx = t.matvec(h, x);
                let xhx_v = t.mul(x, hx);
                let xhx = t.sum(&[xhx_v]);
                let half = t.constant_scalar(0.5);
                let quad = t.mul(half, xhx);
                let neg_b =
                    t.constant(Value::vector(spec.linear_term.iter().map(|v| -v).collect()));
                let nbx_v = t.mul(neg_b, x);
                let nbx = t.sum(&[nbx_v]);
                let root = t.add(quad, nbx);
                t.set_root(root);
            }
            Objective::Rosenbrock { dim } => {
                let one = t.constant_scalar(1.0);
                let neg_one = t.constant_scalar(-1.0);
                let hundred = t.constant_scalar(100.0);
                let mut windows = Vec::with_capacity(dim / 2);
                for w in 0..dim / 2 {
                    let a = t.input_scalar(2 * w);
                    let b = t.input_scalar(2 * w + 1);
                    let neg_a = t.mul(neg_one, a);
                    let d1 = t.add(one, neg_a);
                    let sq1 = t.mul(d1, d1);
                    let aa = t.mul(a, a);
                    let neg_aa = t.mul(neg_one, aa);
                    let d2 = t.add(b, neg_aa);
                    let sq2 = t.mul(d2, d2);
                    let scaled2 = t.mul(hundred, sq2);
                    windows.push(t.add(sq1, scaled2));
                }
                let root = t.sum(&windows);
                t.set_root(root);
            }
            Objective::LogisticRegression { dataset } => {
                let (d, classes) = (dataset.dim(), dataset.classes());
                let w = t.input_matrix(0, classes, d);
                let b = t.input_vector(classes * d, classes);
                let members = Self::batch_members(dataset, batch)?;
                let mut losses = Vec::new();
                for i in members {
                    let x = t.constant(Value::vector(dataset.feature_row(i).to_vec()));
                    let z = t.matvec(w, x);
                    let z = t.add(z, b);
                    losses.push(t.softmax_xent(z, dataset.label(i)));
                }
                let root = t.mean(&losses);
                t.set_root(root);
            }
            Objective::Mlp { dataset, spec } => {
                let (d, classes, hidden) = (dataset.dim(), dataset.classes(), spec.hidden);
                let w1 = t.input_matrix(0, hidden, d);
                let b1 = t.input_vector(hidden * d, hidden);
                let w2 = t.input_matrix((d + 1) * hidden, classes, hidden);
                let b2 = t.input_vector((d + 1) * hidden + classes * hidden, classes);
                let members = Self::batch_members(dataset, batch)?;
                let mut losses = Vec::new();
                for i in members {
                    let x = t.constant(Value::vector(dataset.feature_row(i).to_vec()));
                    let z1 = t.matvec(w1, x);
                    let z1 = t.add(z1, b1);
                    let h = match spec.nonlinearity {
                        Nonlinearity::Relu => t.relu(z1),
                        Nonlinearity::Sigmoid => t.sigmoid(z1),
                    };
                    let z2 = t.matvec(w2, h);
                    let z2 = t.add(z2, b2);
                    losses.push(t.softmax_xent(z2, dataset.label(i)));
                }
                let root = t.mean(&losses);
                t.set_root(root);
            }
        }
        Ok(t)
    }

    fn sample_logits(&self, params: &[f64], sample: usize) -> Option<Vec<f64>> {
        match self {
            Objective::Quadratic(_) | Objective::Rosenbrock { .. } => None,
            Objective::LogisticRegression { dataset } => {
                Some(logreg_logits(dataset, params, sample))
            }
            Objective::Mlp { dataset, spec } => Some(mlp_logits(dataset, spec, params, sample)),
        }
    }

    /// Full-dataset classification accuracy; `None` for analytic kinds.
    /// Argmax ties resolve to the lowest class index.
    pub fn accuracy(&self, params: &ParamVector) -> Result<Option<f64>> {
        self.check_dim(params)?;
        let dataset = match self.dataset() {
            None => return Ok(None),
            Some(d) => d,
        };
        let x = params.as_slice();
        let mut correct = 0usize;
        for i in 0..dataset.n() {
            let logits = self
                .sample_logits(x, i)
                .expect("dataset kinds produce logits");
            let mut best = 0usize;
            for (c, &z) in logits.iter().enumerate() {
                if z > logits[best] {
                    best = c;
                }
            }
            if best == dataset.label(i) {
                correct += 1;
            }
        }
        Ok(Some(correct as f64 / dataset.n() as f64))
    }
}

enum BatchIter<'a> {
    Full(core::ops::Range<usize>),
    Explicit(core::slice::Iter<'a, usize>),
}

impl<'a> Iterator for BatchIter<'a> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        match self {
            BatchIter::Full(range) => range.next(),
            BatchIter::Explicit(iter) => iter.next().copied(),
        }
    }
}

fn logreg_logits(dataset: &Dataset, params: &[f64], sample: usize) -> Vec<f64> {
    let (d, classes) = (dataset.dim(), dataset.classes());
    let row = dataset.feature_row(sample);
    let bias = &params[classes * d..];
    (0..classes)
        .map(|c| {
            let wrow = &params[c * d..(c + 1) * d];
            let dot: f64 = wrow.iter().zip(row).map(|(w, v)| w * v).sum();
            dot + bias[c]
        })
        .collect()
}

fn mlp_logits(dataset: &Dataset, spec: &MlpSpec, params: &[f64], sample: usize) -> Vec<f64> {
    let (d, classes, hidden) = (dataset.dim(), dataset.classes(), spec.hidden);
    let row = dataset.feature_row(sample);
    let w1 = &params[..hidden * d];
    let b1 = &params[hidden * d..(d + 1) * hidden];
    let w2_off = (d + 1) * hidden;
    let w2 = &params[w2_off..w2_off + classes * hidden];
    let b2 = &params[w2_off + classes * hidden..];

    let mut h = vec![0.0; hidden];
    for (u, slot) in h.iter_mut().enumerate() {
        let dot: f64 = w1[u * d..(u + 1) * d]
            .iter()
            .zip(row)
            .map(|(w, v)| w * v)
            .sum();
        let z = dot + b1[u];
        *slot = match spec.nonlinearity {
            Nonlinearity::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Nonlinearity::Sigmoid => crate::tape::sigmoid(z),
        };
    }
    (0..classes)
        .map(|c| {
            let dot: f64 = w2[c * hidden..(c + 1) * hidden]
                .iter()
                .zip(&h)
                .map(|(w, v)| w * v)
                .sum();
            dot + b2[c]
        })
        .collect()
}

/// Numerically stable softmax cross-entropy against a class index.
fn stable_xent(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|&v| crate::math::exp(v - max)).sum();
    crate::math::ln(z) + max - logits[target]
}
