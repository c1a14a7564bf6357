//! Bounded minimization by Nelder–Mead on a transformed, unconstrained space,
//! with an optional finite-difference BFGS polish.
//!
//! Box bounds map through logistic (two-sided) or exponential (one-sided)
//! transforms. Groups of non-negative coordinates whose sum must stay below a
//! cap (stationarity regions such as `a + b < 1`) map through an additive
//! logistic transform. Every point handed to the objective is therefore
//! feasible, and likelihood values are never penalized for leaving the region.

use crate::error::{Error, Result};

/// Objective value substituted for non-finite evaluations during the search.
pub const PENALTY: f64 = 1e10;

/// `x[indices]` are strictly positive and sum to less than `cap`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexGroup {
    pub indices: Vec<usize>,
    pub cap: f64,
}

pub struct BoxedProblem<'a> {
    dim: usize,
    objective: Box<dyn Fn(&[f64]) -> f64 + Send + Sync + 'a>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    groups: Vec<SimplexGroup>,
}

impl<'a> BoxedProblem<'a> {
    pub fn new(dim: usize, objective: impl Fn(&[f64]) -> f64 + Send + Sync + 'a) -> Self {
        Self {
            dim,
            objective: Box::new(objective),
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
            groups: Vec::new(),
        }
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != self.dim || upper.len() != self.dim {
            return Err(Error::Input(
                "bound vectors must match the dimension".into(),
            ));
        }
        if let Some(i) = (0..self.dim).find(|&i| !(lower[i] <= upper[i])) {
            return Err(Error::Input(format!(
                "lower bound exceeds upper bound for coordinate {i}"
            )));
        }
        self.lower = lower;
        self.upper = upper;
        Ok(self)
    }

    /// Constrain `x[indices] > 0` with `sum(x[indices]) < cap`. Box bounds on
    /// those coordinates are ignored.
    pub fn with_simplex(mut self, indices: Vec<usize>, cap: f64) -> Result<Self> {
        if indices.is_empty() || !(cap > 0.0) || !cap.is_finite() {
            return Err(Error::Input(
                "simplex group needs indices and a positive cap".into(),
            ));
        }
        if indices.iter().any(|&i| i >= self.dim)
            || self
                .groups
                .iter()
                .any(|g| g.indices.iter().any(|i| indices.contains(i)))
        {
            return Err(Error::Input(
                "simplex group indices invalid or overlapping".into(),
            ));
        }
        self.groups.push(SimplexGroup { indices, cap });
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        (self.objective)(x)
    }

    fn in_group(&self, i: usize) -> bool {
        self.groups.iter().any(|g| g.indices.contains(&i))
    }

    pub fn is_feasible(&self, x: &[f64]) -> bool {
        if x.len() != self.dim {
            return false;
        }
        for i in 0..self.dim {
            if !self.in_group(i) && !(x[i] >= self.lower[i] && x[i] <= self.upper[i]) {
                return false;
            }
        }
        self.groups.iter().all(|g| {
            g.indices.iter().all(|&i| x[i] >= 0.0)
                && g.indices.iter().map(|&i| x[i]).sum::<f64>() <= g.cap
        })
    }

    /// Map a feasible point to unconstrained coordinates. Points on a bound
    /// are pulled a small distance into the interior first.
    pub fn to_unconstrained(&self, x: &[f64]) -> Vec<f64> {
        let mut u = x.to_vec();
        for i in 0..self.dim {
            if self.in_group(i) {
                continue;
            }
            let (lo, hi) = (self.lower[i], self.upper[i]);
            u[i] = match (lo.is_finite(), hi.is_finite()) {
                (true, true) if hi > lo => {
                    let w = hi - lo;
                    let p = ((x[i] - lo) / w).clamp(1e-10, 1.0 - 1e-10);
                    (p / (1.0 - p)).ln()
                }
                (true, true) => 0.0,
                (true, false) => (x[i] - lo).max(1e-10).ln(),
                (false, true) => -(hi - x[i]).max(1e-10).ln(),
                (false, false) => x[i],
            };
        }
        for g in &self.groups {
            let vals: Vec<f64> = g.indices.iter().map(|&i| x[i].max(1e-10 * g.cap)).collect();
            let s: f64 = vals.iter().sum();
            let slack = (g.cap - s).max(1e-10 * g.cap);
            for (&i, v) in g.indices.iter().zip(&vals) {
                u[i] = (v / slack).ln();
            }
        }
        u
    }

    pub fn from_unconstrained(&self, u: &[f64]) -> Vec<f64> {
        let mut x = u.to_vec();
        for i in 0..self.dim {
            if self.in_group(i) {
                continue;
            }
            let (lo, hi) = (self.lower[i], self.upper[i]);
            x[i] = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => {
                    let p = logistic(u[i]);
                    (lo + (hi - lo) * p).clamp(lo, hi)
                }
                (true, false) => lo + u[i].exp(),
                (false, true) => hi - (-u[i]).exp(),
                (false, false) => u[i],
            };
        }
        for g in &self.groups {
            // additive logistic: x_k = cap * e^{u_k} / (1 + sum_j e^{u_j}), computed stably
            let m = g.indices.iter().map(|&i| u[i]).fold(0.0f64, f64::max);
            let denom = (-m).exp() + g.indices.iter().map(|&i| (u[i] - m).exp()).sum::<f64>();
            for &i in &g.indices {
                x[i] = g.cap * (u[i] - m).exp() / denom;
            }
        }
        x
    }
}

fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub ftol: f64,
    pub xtol: f64,
    pub max_evals: usize,
    /// Fresh-simplex restarts from the incumbent after convergence.
    pub max_restarts: usize,
    pub refine: bool,
    /// Initial simplex edge length in unconstrained coordinates.
    pub initial_step: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            ftol: 1e-8,
            xtol: 1e-8,
            max_evals: 20_000,
            max_restarts: 2,
            refine: true,
            initial_step: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub argmin: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub restarts: usize,
}

struct Counter<'p, 'a> {
    problem: &'p BoxedProblem<'a>,
    evals: usize,
}

impl Counter<'_, '_> {
    fn eval(&mut self, u: &[f64]) -> f64 {
        self.evals += 1;
        let v = self.problem.evaluate(&self.problem.from_unconstrained(u));
        if v.is_finite() {
            v
        } else {
            PENALTY
        }
    }
}

pub fn minimize(
    problem: &BoxedProblem<'_>,
    start: &[f64],
    settings: &Settings,
) -> Result<OptResult> {
    if start.len() != problem.dim {
        return Err(Error::Input(format!(
            "start has {} coordinates, problem has {}",
            start.len(),
            problem.dim
        )));
    }
    if !problem.is_feasible(start) {
        return Err(Error::Input(format!(
            "start {start:?} is outside the feasible region"
        )));
    }
    if problem.evaluate(start).is_nan() {
        return Err(Error::Input("objective is NaN at the start point".into()));
    }

    let mut counter = Counter { problem, evals: 0 };
    let mut u_best = problem.to_unconstrained(start);
    let mut f_best = counter.eval(&u_best);
    let mut iterations = 0;
    let mut restarts = 0;

    let mut run = nelder_mead(&mut counter, &u_best, f_best, settings);
    iterations += run.iterations;
    let mut converged = run.converged;
    if run.f <= f_best {
        u_best = run.u;
        f_best = run.f;
    }
    while converged && restarts < settings.max_restarts && counter.evals < settings.max_evals {
        restarts += 1;
        run = nelder_mead(&mut counter, &u_best, f_best, settings);
        iterations += run.iterations;
        converged = run.converged;
        let gain = f_best - run.f;
        if run.f < f_best {
            u_best = run.u;
            f_best = run.f;
        }
        if gain <= settings.ftol * (1.0 + f_best.abs()) {
            break;
        }
    }

    if settings.refine && counter.evals < settings.max_evals {
        let (u, f, iters) = bfgs_polish(&mut counter, &u_best, f_best, settings);
        iterations += iters;
        if f < f_best {
            u_best = u;
            f_best = f;
        }
    }

    Ok(OptResult {
        argmin: problem.from_unconstrained(&u_best),
        value: f_best,
        converged,
        iterations,
        evaluations: counter.evals,
        restarts,
    })
}

/// Minimize from each start; the lowest value wins, earliest start on ties.
pub fn multi_start(
    problem: &BoxedProblem<'_>,
    starts: &[Vec<f64>],
    settings: &Settings,
) -> Result<OptResult> {
    if starts.is_empty() {
        return Err(Error::Input("multi_start needs at least one start".into()));
    }
    let mut best: Option<OptResult> = None;
    let mut iterations = 0;
    let mut evaluations = 0;
    for s in starts {
        let r = minimize(problem, s, settings)?;
        iterations += r.iterations;
        evaluations += r.evaluations;
        let better = match &best {
            None => true,
            Some(b) => r.value < b.value,
        };
        if better {
            best = Some(r);
        }
    }
    let mut best = best.expect("non-empty starts");
    best.iterations = iterations;
    best.evaluations = evaluations;
    best.restarts += starts.len() - 1;
    Ok(best)
}

struct NmRun {
    u: Vec<f64>,
    f: f64,
    converged: bool,
    iterations: usize,
}

fn nelder_mead(counter: &mut Counter<'_, '_>, u0: &[f64], f0: f64, settings: &Settings) -> NmRun {
    let n = u0.len();
    let nf = n as f64;
    // adaptive coefficients for higher dimensions; standard ones for n <= 2
    let (alpha, gamma, rho, sigma) = if n > 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };

    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut vals: Vec<f64> = Vec::with_capacity(n + 1);
    pts.push(u0.to_vec());
    vals.push(f0);
    for i in 0..n {
        let mut p = u0.to_vec();
        p[i] += settings.initial_step * u0[i].abs().max(1.0);
        vals.push(counter.eval(&p));
        pts.push(p);
    }

    let mut iterations = 0;
    let mut converged = false;
    loop {
        // order vertices, best first; stable for ties so results are deterministic
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let f_spread = vals[n] - vals[0];
        let x_spread = pts[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        let scale = pts[0].iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if f_spread <= settings.ftol * (1.0 + vals[0].abs()) && x_spread <= settings.xtol * scale {
            converged = true;
            break;
        }
        if counter.evals >= settings.max_evals {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for p in &pts[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / nf;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&pts[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(alpha);
        let fr = counter.eval(&xr);
        if fr < vals[0] {
            let xe = along(alpha * gamma);
            let fe = counter.eval(&xe);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[n] {
            let xc = along(alpha * rho);
            let fc = counter.eval(&xc);
            (xc, fc)
        } else {
            let xc = along(-rho);
            let fc = counter.eval(&xc);
            (xc, fc)
        };
        if fc < vals[n].min(fr) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        // shrink towards the best vertex
        for i in 1..=n {
            let p: Vec<f64> = pts[0]
                .iter()
                .zip(&pts[i])
                .map(|(b, v)| b + sigma * (v - b))
                .collect();
            vals[i] = counter.eval(&p);
            pts[i] = p;
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| vals[a].total_cmp(&vals[b]))
        .unwrap_or(0);
    NmRun {
        u: pts[best].clone(),
        f: vals[best],
        converged,
        iterations,
    }
}

fn gradient(counter: &mut Counter<'_, '_>, u: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; u.len()];
    let mut p = u.to_vec();
    for i in 0..u.len() {
        let h = 1e-6 * u[i].abs().max(1.0);
        p[i] = u[i] + h;
        let fp = counter.eval(&p);
        p[i] = u[i] - h;
        let fm = counter.eval(&p);
        p[i] = u[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

fn bfgs_polish(
    counter: &mut Counter<'_, '_>,
    u0: &[f64],
    f0: f64,
    settings: &Settings,
) -> (Vec<f64>, f64, usize) {
    let n = u0.len();
    let mut u = u0.to_vec();
    let mut f = f0;
    let mut h = identity(n);
    let mut g = gradient(counter, &u);
    let mut iters = 0;
    while iters < 200 && counter.evals < settings.max_evals {
        if g.iter().any(|v| !v.is_finite()) || inf_norm(&g) <= 1e-9 * (1.0 + f.abs()) {
            break;
        }
        iters += 1;
        let mut d: Vec<f64> = mat_vec(&h, &g).iter().map(|v| -v).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            h = identity(n);
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let fc = counter.eval(&cand);
            if fc <= f + 1e-4 * t * slope && fc < f {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((u_new, f_new)) = accepted else {
            break;
        };
        let g_new = gradient(counter, &u_new);
        let s: Vec<f64> = u_new.iter().zip(&u).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let improvement = f - f_new;
        u = u_new;
        f = f_new;
        g = g_new;
        if sy > 1e-12 {
            let hy = mat_vec(&h, &y);
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i][j] +=
                        (sy + yhy) * s[i] * s[j] / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
        if improvement <= 1e-14 * (1.0 + f.abs()) {
            break;
        }
    }
    (u, f, iters)
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}
