//! Full-batch proximal gradient for multinomial logistic regression with an L1 and
//! a ridge penalty on the non-bias weights.
//!
//! Objective, with `W` of shape C x (K+1) and the bias in the last column:
//!
//! ```text
//! mean_i CE(y_i, W [x_i; 1]) + ridge/2 * |W_nb|^2 + l1 * |W_nb|_1
//! ```
//!
//! Steps are Nesterov-accelerated with a backtracking estimate of the Lipschitz
//! constant. An accelerated step is only accepted if it does not increase the
//! objective; otherwise momentum restarts and a plain proximal step is taken from
//! the last accepted iterate, so the accepted objective sequence is non-increasing.

use ndarray::{s, Array2, Axis};

use crate::linalg::{softmax_cross_entropy, with_bias_column};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub l1: f64,
    pub ridge: f64,
    pub max_iter: usize,
    /// Stop once the largest absolute weight change between accepted iterates is below this.
    pub tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            l1: 0.0,
            ridge: 0.0,
            max_iter: 10_000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverOutput {
    /// C x (K+1), bias last.
    pub weights: Array2<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at every accepted iterate, starting with the initial point.
    pub trace: Vec<f64>,
}

struct Problem<'a> {
    design: Array2<f64>,
    labels: &'a [usize],
    opts: SolverOptions,
}

impl Problem<'_> {
    fn n_weights(&self) -> usize {
        self.design.ncols() - 1
    }

    fn smooth(&self, w: &Array2<f64>) -> f64 {
        let logits = self.design.dot(&w.t());
        let ce = crate::linalg::mean_cross_entropy(&logits, self.labels);
        let k = self.n_weights();
        let sq: f64 = w.slice(s![.., ..k]).iter().map(|v| v * v).sum();
        ce + 0.5 * self.opts.ridge * sq
    }

    fn smooth_and_grad(&self, w: &Array2<f64>) -> (f64, Array2<f64>) {
        let logits = self.design.dot(&w.t());
        let (mut resid, ce) = softmax_cross_entropy(&logits, self.labels);
        let k = self.n_weights();
        let sq: f64 = w.slice(s![.., ..k]).iter().map(|v| v * v).sum();
        let value = ce + 0.5 * self.opts.ridge * sq;
        for (i, &y) in self.labels.iter().enumerate() {
            resid[[i, y]] -= 1.0;
        }
        let n = self.labels.len() as f64;
        let mut grad = resid.t().dot(&self.design) / n;
        if self.opts.ridge > 0.0 {
            grad.slice_mut(s![.., ..k])
                .scaled_add(self.opts.ridge, &w.slice(s![.., ..k]));
        }
        (value, grad)
    }

    fn penalty(&self, w: &Array2<f64>) -> f64 {
        let k = self.n_weights();
        self.opts.l1 * w.slice(s![.., ..k]).iter().map(|v| v.abs()).sum::<f64>()
    }

    fn objective(&self, w: &Array2<f64>) -> f64 {
        self.smooth(w) + self.penalty(w)
    }

    /// Soft-thresholded gradient step from `y`, backtracking on `lipschitz`. Returns the
    /// new point and its full objective.
    fn prox_step(&self, y: &Array2<f64>, lipschitz: &mut f64) -> (Array2<f64>, f64) {
        let (fy, grad) = self.smooth_and_grad(y);
        let k = self.n_weights();
        loop {
            let step = 1.0 / *lipschitz;
            let mut z = y - &(&grad * step);
            let thresh = self.opts.l1 * step;
            if thresh > 0.0 {
                z.slice_mut(s![.., ..k])
                    .mapv_inplace(|v| v.signum() * (v.abs() - thresh).max(0.0));
            }
            let diff = &z - y;
            let model = fy + (&grad * &diff).sum() + 0.5 * *lipschitz * diff.iter().map(|v| v * v).sum::<f64>();
            let fz = self.smooth(&z);
            if fz <= model + 1e-12 * fy.abs().max(1.0) || *lipschitz > 1e12 {
                let total = fz + self.penalty(&z);
                return (z, total);
            }
            *lipschitz *= 2.0;
        }
    }
}

/// Log class priors over `labels` (clipped for absent classes); the optimal bias at W = 0.
pub fn log_prior_bias(labels: &[usize], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &y in labels {
        counts[y] += 1;
    }
    let n = labels.len().max(1) as f64;
    counts
        .iter()
        .map(|&c| ((c as f64 / n).max(1e-12)).ln())
        .collect()
}

/// Penalized objective of `weights` (C x (K+1)) on `x` (N x K).
pub fn objective(
    x: &Array2<f64>,
    labels: &[usize],
    n_classes: usize,
    weights: &Array2<f64>,
    opts: &SolverOptions,
) -> f64 {
    assert_eq!(weights.dim(), (n_classes, x.ncols() + 1), "weights have the wrong shape");
    Problem {
        design: with_bias_column(x),
        labels,
        opts: *opts,
    }
    .objective(weights)
}

/// Fits weights for `x` (N x K, no bias column) against `labels`.
///
/// The starting point is the best (lowest objective) of all-zero weights, zero
/// weights with log-prior bias, and `init` when given.
pub fn fit_multinomial(
    x: &Array2<f64>,
    labels: &[usize],
    n_classes: usize,
    opts: &SolverOptions,
    init: Option<&Array2<f64>>,
) -> SolverOutput {
    let problem = Problem {
        design: with_bias_column(x),
        labels,
        opts: *opts,
    };
    let k = x.ncols();
    let zero = Array2::zeros((n_classes, k + 1));
    let mut prior = zero.clone();
    for (c, b) in log_prior_bias(labels, n_classes).into_iter().enumerate() {
        prior[[c, k]] = b;
    }
    let mut candidates = vec![zero, prior];
    if let Some(w) = init {
        assert_eq!(w.dim(), (n_classes, k + 1), "warm start has wrong shape");
        candidates.push(w.clone());
    }
    let (mut x_cur, mut f_cur) = candidates
        .into_iter()
        .map(|w| {
            let f = problem.objective(&w);
            (w, f)
        })
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();

    let mut trace = vec![f_cur];
    let mut y = x_cur.clone();
    let mut t = 1.0f64;
    let mut lipschitz = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=opts.max_iter {
        iterations = it;
        lipschitz = (lipschitz * 0.9).max(1e-8);
        let (mut z, mut fz) = problem.prox_step(&y, &mut lipschitz);
        let mut restarted = false;
        if !(fz <= f_cur) {
            (z, fz) = problem.prox_step(&x_cur, &mut lipschitz);
            restarted = true;
            if !(fz <= f_cur) {
                z = x_cur.clone();
                fz = f_cur;
            }
        }
        let delta = (&z - &x_cur).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let t_next = if restarted {
            1.0
        } else {
            0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
        };
        let momentum = if restarted { 0.0 } else { (t - 1.0) / t_next };
        y = &z + &((&z - &x_cur) * momentum);
        x_cur = z;
        f_cur = fz;
        t = t_next;
        trace.push(f_cur);
        if delta < opts.tol {
            converged = true;
            break;
        }
    }

    SolverOutput {
        weights: x_cur,
        objective: f_cur,
        iterations,
        converged,
        trace,
    }
}

/// Logits `[x, 1] W^T` for weights with the bias in the last column.
pub fn logits(x: &Array2<f64>, weights: &Array2<f64>) -> Array2<f64> {
    let k = x.ncols();
    let mut z = x.dot(&weights.slice(s![.., ..k]).t());
    z += &weights.column(k).insert_axis(Axis(0));
    z
}
