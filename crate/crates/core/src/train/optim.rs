//! Adam and L-BFGS.

/// Adam state with the usual defaults and bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl Adam {
    pub fn new(dim: usize) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; dim], v: vec![0.0; dim], step: 0 }
    }

    /// One in-place update. Panics if dimensions differ.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len(), "Adam state dimension");
        assert_eq!(grad.len(), self.m.len(), "gradient dimension");
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step.min(i32::MAX as u64) as i32);
        let c2 = 1.0 - self.beta2.powi(self.step.min(i32::MAX as u64) as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LbfgsOptions {
    pub max_iters: usize,
    pub memory: usize,
    pub grad_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { max_iters: 10_000, memory: 10, grad_tol: 1e-8, c1: 1e-4, max_backtracks: 40 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LbfgsStop {
    GradientTolerance,
    MaxIters,
    /// No step satisfied the Armijo condition; best-so-far is returned.
    LineSearchFailed,
    /// The objective returned a non-finite value at the start point.
    NonFinite,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsResult {
    pub params: Vec<f64>,
    pub loss: f64,
    pub iters: usize,
    pub stop: LbfgsStop,
    /// Loss after each accepted iteration.
    pub history: Vec<f64>,
}

impl LbfgsResult {
    pub fn warning(&self) -> bool {
        matches!(self.stop, LbfgsStop::LineSearchFailed | LbfgsStop::NonFinite)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// L-BFGS with the two-loop recursion and a backtracking Armijo search.
///
/// `f` returns the loss and gradient. Each iteration also tries the
/// minimizer of the quadratic through the initial slope and the trial step
/// and keeps the better point, which gives finite termination on quadratics.
/// `observe` sees every accepted iterate.
pub fn lbfgs_refine<F, O>(params: &[f64], mut f: F, opts: LbfgsOptions, mut observe: O) -> LbfgsResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
    O: FnMut(usize, &[f64], f64),
{
    let mut x = params.to_vec();
    let (mut fx, mut g) = f(&x);
    let mut history = Vec::new();
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return LbfgsResult { params: x, loss: fx, iters: 0, stop: LbfgsStop::NonFinite, history };
    }
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut iters = 0;
    let stop = loop {
        if norm(&g) < opts.grad_tol {
            break LbfgsStop::GradientTolerance;
        }
        if iters >= opts.max_iters {
            break LbfgsStop::MaxIters;
        }
        // two-loop recursion
        let mut q = g.clone();
        let k = s_hist.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            alpha[i] = rho * dot(&s_hist[i], &q);
            for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        let gamma = if k > 0 { dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1]) } else { 1.0 / norm(&g).max(1.0) };
        for qj in q.iter_mut() {
            *qj *= gamma;
        }
        for i in 0..k {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            let beta = rho * dot(&y_hist[i], &q);
            for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
                *qj += (alpha[i] - beta) * sj;
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            // not a descent direction; restart from steepest descent
            s_hist.clear();
            y_hist.clear();
            dir = g.iter().map(|v| -v / norm(&g).max(1.0)).collect();
            slope = dot(&g, &dir);
        }

        let at = |t: f64| -> Vec<f64> { x.iter().zip(&dir).map(|(xi, di)| xi + t * di).collect() };
        let mut step = 1.0;
        let mut accepted: Option<(Vec<f64>, f64, Vec<f64>)> = None;
        for _ in 0..opts.max_backtracks {
            let xt = at(step);
            let (ft, gt) = f(&xt);
            let finite = ft.is_finite() && gt.iter().all(|v| v.is_finite());
            // quadratic model through f(0), f'(0) and f(step)
            let curv = if finite { (ft - fx - slope * step) / (step * step) } else { f64::NAN };
            if curv > 0.0 {
                let tq = -slope / (2.0 * curv);
                if tq > 0.0 && (tq - step).abs() > 1e-12 * step {
                    let xq = at(tq);
                    let (fq, gq) = f(&xq);
                    if fq.is_finite() && gq.iter().all(|v| v.is_finite()) && fq < ft.min(fx) && fq <= fx + opts.c1 * tq * slope {
                        accepted = Some((xq, fq, gq));
                        break;
                    }
                }
            }
            if finite && ft <= fx + opts.c1 * step * slope {
                accepted = Some((xt, ft, gt));
                break;
            }
            step *= if curv > 0.0 { (-slope / (2.0 * curv) / step).clamp(0.1, 0.5) } else { 0.5 };
        }
        let Some((xn, fnew, gn)) = accepted else {
            log::warn!("L-BFGS line search failed after {iters} iterations; keeping best point");
            break LbfgsStop::LineSearchFailed;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-12 * norm(&s) * norm(&y) {
            if s_hist.len() == opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
        } else {
            // no usable curvature; the stale pairs would keep repeating the step
            s_hist.clear();
            y_hist.clear();
        }
        x = xn;
        fx = fnew;
        g = gn;
        iters += 1;
        history.push(fx);
        observe(iters, &x, fx);
    };
    LbfgsResult { params: x, loss: fx, iters, stop, history }
}
