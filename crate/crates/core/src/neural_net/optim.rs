use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::NetError;

/// Adam hyper-parameters with the learning-rate schedule lr(t) = lr₀ · γ^(t/T).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub decay_rate: f64,
    pub decay_steps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay_rate: 0.97,
            decay_steps: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, num_params: usize) -> Self {
        Self {
            config,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Learning rate used by the next step.
    pub fn learning_rate(&self) -> f64 {
        self.config.learning_rate * self.config.decay_rate.powf(self.t as f64 / self.config.decay_steps)
    }

    /// One bias-corrected Adam update.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<(), NetError> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(NetError::Shape("Adam state and parameter lengths differ".into()));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(NetError::NonFinite {
                iteration: self.t as usize,
                what: "gradient".into(),
            });
        }
        let lr = self.learning_rate();
        self.t += 1;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * grad[i];
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * mhat / (vhat.sqrt() + c.epsilon);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BfgsConfig {
    pub max_iterations: usize,
    /// Stop when ‖∇f‖_∞ falls below this.
    pub grad_tolerance: f64,
    /// Stop when |Δf| / |f| falls below this.
    pub relative_tolerance: f64,
    pub c1: f64,
    pub c2: f64,
    /// Above this many parameters the limited-memory variant is used.
    pub dense_limit: usize,
    pub memory: usize,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            grad_tolerance: 1e-8,
            relative_tolerance: 1e-12,
            c1: 1e-4,
            c2: 0.9,
            dense_limit: 10_000,
            memory: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    GradientTolerance,
    RelativeChange,
    Budget,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsReport {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_inf: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub curvature_skips: usize,
    pub reason: StopReason,
    /// Objective value after every iteration.
    pub history: Vec<f64>,
}

enum InverseHessian {
    Dense { h: Vec<f64>, n: usize, fresh: bool },
    Limited { pairs: Vec<(Vec<f64>, Vec<f64>, f64)>, memory: usize, gamma: f64 },
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

impl InverseHessian {
    fn new(n: usize, config: &BfgsConfig) -> Self {
        if n <= config.dense_limit {
            let mut h = vec![0.0; n * n];
            for i in 0..n {
                h[i * n + i] = 1.0;
            }
            InverseHessian::Dense { h, n, fresh: true }
        } else {
            InverseHessian::Limited {
                pairs: Vec::new(),
                memory: config.memory,
                gamma: 1.0,
            }
        }
    }

    fn reset(&mut self) {
        match self {
            InverseHessian::Dense { h, n, fresh } => {
                h.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..*n {
                    h[i * *n + i] = 1.0;
                }
                *fresh = true;
            }
            InverseHessian::Limited { pairs, gamma, .. } => {
                pairs.clear();
                *gamma = 1.0;
            }
        }
    }

    fn is_fresh(&self) -> bool {
        match self {
            InverseHessian::Dense { fresh, .. } => *fresh,
            InverseHessian::Limited { pairs, .. } => pairs.is_empty(),
        }
    }

    /// −H g
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        match self {
            InverseHessian::Dense { h, n, .. } => h
                .par_chunks(*n)
                .map(|row| -dot(row, g))
                .collect(),
            InverseHessian::Limited { pairs, gamma, .. } => {
                let mut q = g.to_vec();
                let mut alphas = Vec::with_capacity(pairs.len());
                for (s, y, rho) in pairs.iter().rev() {
                    let a = rho * dot(s, &q);
                    q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
                    alphas.push(a);
                }
                q.iter_mut().for_each(|v| *v *= gamma);
                for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
                    let b = rho * dot(y, &q);
                    q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
                }
                q.iter_mut().for_each(|v| *v = -*v);
                q
            }
        }
    }

    /// BFGS update; returns false when skipped by the curvature safeguard.
    fn update(&mut self, s: &[f64], y: &[f64]) -> bool {
        let sy = dot(s, y);
        let (ns, ny) = (dot(s, s).sqrt(), dot(y, y).sqrt());
        if sy <= 1e-12 * ns * ny {
            return false;
        }
        let rho = 1.0 / sy;
        match self {
            InverseHessian::Dense { h, n, fresh } => {
                let n = *n;
                if *fresh {
                    let scale = sy / dot(y, y);
                    for i in 0..n {
                        h[i * n + i] = scale;
                    }
                    *fresh = false;
                }
                // H⁺ = H − ρ(s (Hy)ᵀ + (Hy) sᵀ) + (ρ² yᵀHy + ρ) s sᵀ
                let hy: Vec<f64> = h.par_chunks(n).map(|row| dot(row, y)).collect();
                let yhy = dot(y, &hy);
                let k = rho * rho * yhy + rho;
                h.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                    let (si, hyi) = (s[i], hy[i]);
                    for j in 0..n {
                        row[j] += -rho * (si * hy[j] + hyi * s[j]) + k * si * s[j];
                    }
                });
            }
            InverseHessian::Limited { pairs, memory, gamma } => {
                if pairs.len() == *memory {
                    pairs.remove(0);
                }
                *gamma = sy / dot(y, y);
                pairs.push((s.to_vec(), y.to_vec(), rho));
            }
        }
        true
    }

    #[cfg(test)]
    fn dense(&self) -> Option<(&[f64], usize)> {
        match self {
            InverseHessian::Dense { h, n, .. } => Some((h, *n)),
            _ => None,
        }
    }
}

struct Trial {
    alpha: f64,
    f: f64,
    dphi: f64,
    g: Vec<f64>,
}

struct LineSearch<'a, F> {
    objective: &'a mut F,
    x: &'a [f64],
    d: &'a [f64],
    f0: f64,
    dphi0: f64,
    c1: f64,
    c2: f64,
    evaluations: usize,
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> LineSearch<'_, F> {
    fn eval(&mut self, alpha: f64) -> Trial {
        let xt: Vec<f64> = self.x.iter().zip(self.d).map(|(xi, di)| xi + alpha * di).collect();
        let mut g = vec![0.0; xt.len()];
        let f = (self.objective)(&xt, &mut g);
        self.evaluations += 1;
        let dphi = dot(&g, self.d);
        Trial { alpha, f, dphi, g }
    }

    fn armijo(&self, t: &Trial) -> bool {
        t.f <= self.f0 + self.c1 * t.alpha * self.dphi0
    }

    fn curvature(&self, t: &Trial) -> bool {
        t.dphi.abs() <= -self.c2 * self.dphi0
    }

    /// Strong-Wolfe search (bracketing then zoom). Falls back to the best
    /// sufficient-decrease point when the zoom budget runs out.
    fn search(&mut self, alpha0: f64) -> Option<Trial> {
        let mut prev = Trial {
            alpha: 0.0,
            f: self.f0,
            dphi: self.dphi0,
            g: Vec::new(),
        };
        let mut alpha = alpha0;
        for i in 0..30 {
            let t = self.eval(alpha);
            if !t.f.is_finite() || t.g.iter().any(|v| !v.is_finite()) {
                alpha = 0.5 * (prev.alpha + alpha);
                continue;
            }
            if !self.armijo(&t) || (i > 0 && t.f >= prev.f) {
                return self.zoom(prev, t);
            }
            if self.curvature(&t) {
                return Some(t);
            }
            if t.dphi >= 0.0 {
                return self.zoom(t, prev);
            }
            alpha *= 2.0;
            prev = t;
        }
        None
    }

    fn zoom(&mut self, mut lo: Trial, mut hi: Trial) -> Option<Trial> {
        for _ in 0..40 {
            let (a, b) = (lo.alpha, hi.alpha);
            let width = (b - a).abs();
            if width < 1e-16 * a.abs().max(b.abs()).max(1e-300) {
                break;
            }
            // Cubic interpolation, safeguarded into the central part of the bracket.
            let d1 = lo.dphi + hi.dphi - 3.0 * (lo.f - hi.f) / (a - b);
            let disc = d1 * d1 - lo.dphi * hi.dphi;
            let mut alpha = if disc >= 0.0 {
                let d2 = (b - a).signum() * disc.sqrt();
                b - (b - a) * (hi.dphi + d2 - d1) / (hi.dphi - lo.dphi + 2.0 * d2)
            } else {
                f64::NAN
            };
            let (left, right) = (a.min(b) + 0.1 * width, a.max(b) - 0.1 * width);
            if !alpha.is_finite() || alpha < left || alpha > right {
                alpha = 0.5 * (a + b);
            }
            let t = self.eval(alpha);
            if !t.f.is_finite() || !self.armijo(&t) || t.f >= lo.f {
                hi = t;
            } else {
                if self.curvature(&t) {
                    return Some(t);
                }
                if t.dphi * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = t;
            }
        }
        (lo.alpha > 0.0 && !lo.g.is_empty()).then_some(lo)
    }
}

/// Quasi-Newton minimisation with strong-Wolfe line searches.
///
/// `objective(x, grad)` returns f(x) and writes ∇f(x) into `grad`. A dense inverse
/// Hessian is kept up to `config.dense_limit` unknowns, L-BFGS beyond.
pub fn bfgs_minimize<F>(mut objective: F, x0: &[f64], config: &BfgsConfig) -> Result<BfgsReport, NetError>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = objective(&x, &mut g);
    let mut evaluations = 1;
    let non_finite = |iteration: usize, f: f64, g: &[f64]| -> Result<(), NetError> {
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFinite {
                iteration,
                what: format!("objective {f} or its gradient"),
            });
        }
        Ok(())
    };
    non_finite(0, f, &g)?;
    let mut hinv = InverseHessian::new(n, config);
    let mut history = Vec::new();
    let mut curvature_skips = 0;
    let mut iterations = 0;
    let reason = loop {
        if norm_inf(&g) < config.grad_tolerance {
            break StopReason::GradientTolerance;
        }
        if iterations >= config.max_iterations {
            break StopReason::Budget;
        }
        let mut d = hinv.direction(&g);
        if dot(&d, &g) >= 0.0 {
            hinv.reset();
            d = hinv.direction(&g);
        }
        let alpha0 = if hinv.is_fresh() {
            1.0 / dot(&g, &g).sqrt().max(1.0)
        } else {
            1.0
        };
        let dphi0 = dot(&g, &d);
        let mut ls = LineSearch {
            objective: &mut objective,
            x: &x,
            d: &d,
            f0: f,
            dphi0,
            c1: config.c1,
            c2: config.c2,
            evaluations: 0,
        };
        let found = ls.search(alpha0);
        evaluations += ls.evaluations;
        let Some(trial) = found else {
            if hinv.is_fresh() {
                break StopReason::LineSearchFailed;
            }
            hinv.reset();
            continue;
        };
        iterations += 1;
        non_finite(iterations, trial.f, &trial.g)?;
        let s: Vec<f64> = d.iter().map(|di| trial.alpha * di).collect();
        let y: Vec<f64> = trial.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        if !hinv.update(&s, &y) {
            curvature_skips += 1;
        }
        x.iter_mut().zip(&s).for_each(|(xi, si)| *xi += si);
        let f_prev = f;
        f = trial.f;
        g = trial.g;
        history.push(f);
        if iterations % 500 == 0 {
            log::debug!("bfgs iteration {iterations}: f {f:e}, |g|_inf {:e}", norm_inf(&g));
        }
        if (f_prev - f).abs() <= config.relative_tolerance * f_prev.abs().max(f64::MIN_POSITIVE) {
            break StopReason::RelativeChange;
        }
    };
    Ok(BfgsReport {
        grad_inf: norm_inf(&g),
        x,
        f,
        iterations,
        evaluations,
        curvature_skips,
        reason,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(a: &[f64]) -> impl FnMut(&[f64], &mut [f64]) -> f64 + '_ {
        move |x, g| {
            let mut f = 0.0;
            for i in 0..x.len() {
                let r = x[i] - a[i];
                f += r * r;
                g[i] = 2.0 * r;
            }
            f
        }
    }

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    #[test]
    fn bfgs_quadratic() {
        let a = [1.0, -2.0, 3.5];
        let r = bfgs_minimize(quadratic(&a), &[0.0; 3], &BfgsConfig::default()).unwrap();
        for (xi, ai) in r.x.iter().zip(a) {
            assert!((xi - ai).abs() < 1e-8);
        }
    }

    #[test]
    fn bfgs_rosenbrock() {
        let r = bfgs_minimize(rosenbrock, &[-1.2, 1.0], &BfgsConfig::default()).unwrap();
        assert!(r.f < 1e-10, "f = {} after {} iterations ({:?})", r.f, r.iterations, r.reason);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn lbfgs_rosenbrock() {
        let cfg = BfgsConfig {
            dense_limit: 1,
            ..BfgsConfig::default()
        };
        let r = bfgs_minimize(rosenbrock, &[-1.2, 1.0], &cfg).unwrap();
        assert!(r.f < 1e-10, "f = {}", r.f);
    }

    #[test]
    fn non_finite_objective_aborts() {
        let r = bfgs_minimize(|_x: &[f64], g: &mut [f64]| {
            g[0] = 1.0;
            f64::NAN
        }, &[0.0], &BfgsConfig::default());
        assert!(matches!(r, Err(NetError::NonFinite { iteration: 0, .. })));
    }

    #[test]
    fn curvature_safeguard_keeps_spd() {
        let cfg = BfgsConfig::default();
        let mut h = InverseHessian::new(3, &cfg);
        assert!(!h.update(&[1.0, 0.0, 0.0], &[-1.0, 0.0, 0.0]));
        assert!(h.update(&[1.0, 0.5, 0.0], &[2.0, 0.3, 0.1]));
        assert!(h.update(&[0.2, -0.5, 0.3], &[0.1, -0.9, 0.8]));
        let (m, n) = h.dense().unwrap();
        let mat = nalgebra::DMatrix::from_row_slice(n, n, m);
        assert!((mat.clone() - mat.transpose()).abs().max() < 1e-14);
        let eig = nalgebra::SymmetricEigen::new(mat).eigenvalues;
        assert!(eig.min() > 0.0);
    }

    #[test]
    fn adam_quadratic() {
        let a = [1.0, -2.0, 0.5];
        let cfg = AdamConfig {
            learning_rate: 0.05,
            decay_rate: 0.97,
            decay_steps: 100.0,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(cfg, 3);
        let mut x = vec![0.0; 3];
        let mut g = vec![0.0; 3];
        let mut obj = quadratic(&a);
        let mut losses = Vec::new();
        for _ in 0..6000 {
            losses.push(obj(&x, &mut g));
            adam.step(&mut x, &g).unwrap();
        }
        for (xi, ai) in x.iter().zip(a) {
            assert!((xi - ai).abs() < 1e-8, "{xi} vs {ai}");
        }
        // Moving averages over 100-step windows never increase.
        let avg: Vec<f64> = losses.chunks(100).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        assert!(avg.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        assert!((adam.learning_rate() - 0.05 * 0.97f64.powf(60.0)).abs() < 1e-15);
    }
}
