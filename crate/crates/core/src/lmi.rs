//! Log-barrier interior-point method for log-det objectives under linear
//! matrix inequalities and weighted ℓ1 group bounds.
//!
//! The solver minimizes
//!
//! ```text
//! −Σ_o log det A_o(x) + μ·[ −Σ_b log det B_b(x) − Σ_g log(c_g − Σ_a ω_a t_a)
//!                           − Σ_a log(t_a − x_{v_a}) − log(t_a + x_{v_a}) ]
//! ```
//!
//! where `A_o`, `B_b` are affine symmetric matrix functions of `x` and the
//! epigraph variables `t` encode `Σ_a ω_a |x_{v_a}| ≤ c_g`. The `t` block of
//! the Hessian is diagonal plus rank one per group, so it is eliminated
//! exactly before the Cholesky solve on `x`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `C + Σ_a x_a F_a` with sparse symmetric `F_a`.
#[derive(Clone, Debug)]
pub(crate) struct AffineSym {
    constant: DMatrix<f64>,
    terms: BTreeMap<usize, Vec<(usize, usize, f64)>>,
}

impl AffineSym {
    pub fn new(constant: DMatrix<f64>) -> Self {
        Self {
            constant,
            terms: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    /// Adds `v` at `(i, j)` and `(j, i)` of `F_var`.
    pub fn add_sym(&mut self, var: usize, i: usize, j: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        let entries = self.terms.entry(var).or_default();
        entries.push((i, j, v));
        if i != j {
            entries.push((j, i, v));
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut a = self.constant.clone();
        for (&var, entries) in &self.terms {
            let xv = x[var];
            if xv != 0.0 {
                for &(i, j, v) in entries {
                    a[(i, j)] += xv * v;
                }
            }
        }
        a
    }

    /// Accumulates `weight·(−tr(S F_a))` into `grad` and
    /// `weight·tr(S F_a S F_b)` into `hess`, with `S = A⁻¹`.
    fn accumulate(
        &self,
        s: &DMatrix<f64>,
        weight: f64,
        grad: &mut DVector<f64>,
        hess: &mut DMatrix<f64>,
    ) {
        let terms: Vec<(usize, &Vec<(usize, usize, f64)>)> =
            self.terms.iter().map(|(k, v)| (*k, v)).collect();
        for (ia, &(a, ea)) in terms.iter().enumerate() {
            grad[a] -= weight * ea.iter().map(|&(p, q, v)| v * s[(q, p)]).sum::<f64>();
            for &(b, eb) in &terms[ia..] {
                let mut h = 0.0;
                for &(p, q, v) in ea {
                    for &(r, t, w) in eb {
                        h += v * w * s[(q, r)] * s[(t, p)];
                    }
                }
                hess[(a, b)] += weight * h;
                if a != b {
                    hess[(b, a)] += weight * h;
                }
            }
        }
    }
}

/// `Σ ω_a |x_{v_a}| ≤ bound`; every variable belongs to at most one group.
#[derive(Clone, Debug)]
pub(crate) struct AbsGroup {
    pub members: Vec<(usize, f64)>,
    pub bound: f64,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct BarrierProblem {
    pub n_vars: usize,
    /// Blocks entering `−log det` with unit weight.
    pub objective: Vec<AffineSym>,
    /// Blocks entering `−log det` with weight `μ`.
    pub lmis: Vec<AffineSym>,
    pub groups: Vec<AbsGroup>,
}

/// Cholesky-based log det, `None` outside the PD cone.
fn chol_logdet_inv(a: &DMatrix<f64>, want_inverse: bool) -> Option<(f64, Option<DMatrix<f64>>)> {
    let chol = a.clone().cholesky()?;
    let l = chol.l_dirty();
    let mut ld = 0.0;
    for i in 0..a.nrows() {
        let d = l[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        ld += 2.0 * d.ln();
    }
    let inv = want_inverse.then(|| chol.inverse());
    Some((ld, inv))
}

/// Per-group quantities reused by the Newton elimination.
struct GroupTerms {
    d: Vec<f64>,
    c: Vec<f64>,
    gt: Vec<f64>,
    slack: f64,
}

pub(crate) struct Barrier<'a> {
    prob: &'a BarrierProblem,
    x: DVector<f64>,
    t: Vec<Vec<f64>>,
    mu: f64,
    newton_steps: usize,
}

impl<'a> Barrier<'a> {
    /// Starts from a strictly feasible `x0`; epigraph variables are placed
    /// halfway between `|x|` and the group bound.
    pub fn new(prob: &'a BarrierProblem, x0: DVector<f64>) -> Result<Self> {
        let mut t = Vec::with_capacity(prob.groups.len());
        for (gi, g) in prob.groups.iter().enumerate() {
            let used: f64 = g.members.iter().map(|&(v, w)| w * x0[v].abs()).sum();
            let spare = g.bound - used;
            if !(spare > 0.0) {
                return Err(Error::Infeasible(format!(
                    "start point violates group {gi}"
                )));
            }
            let wsum: f64 = g.members.iter().map(|&(_, w)| w).sum();
            t.push(
                g.members
                    .iter()
                    .map(|&(v, _)| x0[v].abs() + 0.5 * spare / wsum)
                    .collect(),
            );
        }
        let s = Self {
            prob,
            x: x0,
            t,
            mu: 1.0,
            newton_steps: 0,
        };
        if s.value(&s.x, &s.t, 1.0).is_none() {
            return Err(Error::Infeasible(
                "start point is not strictly feasible".into(),
            ));
        }
        Ok(s)
    }

    pub fn x(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn newton_steps(&self) -> usize {
        self.newton_steps
    }

    /// `μ·B_b(x)⁻¹` for every barrier LMI: the multiplier estimates.
    pub fn multipliers(&self) -> Vec<DMatrix<f64>> {
        self.prob
            .lmis
            .iter()
            .map(|b| {
                chol_logdet_inv(&b.eval(&self.x), true)
                    .and_then(|(_, inv)| inv)
                    .map(|s| s * self.mu)
                    .unwrap_or_else(|| DMatrix::zeros(b.dim(), b.dim()))
            })
            .collect()
    }

    fn value(&self, x: &DVector<f64>, t: &[Vec<f64>], mu: f64) -> Option<f64> {
        let mut f = 0.0;
        for o in &self.prob.objective {
            f -= chol_logdet_inv(&o.eval(x), false)?.0;
        }
        let mut phi = 0.0;
        for b in &self.prob.lmis {
            phi -= chol_logdet_inv(&b.eval(x), false)?.0;
        }
        for (g, tg) in self.prob.groups.iter().zip(t) {
            let mut used = 0.0;
            for (&(v, w), &ta) in g.members.iter().zip(tg) {
                let (p, q) = (ta - x[v], ta + x[v]);
                if !(p > 0.0 && q > 0.0) {
                    return None;
                }
                phi -= p.ln() + q.ln();
                used += w * ta;
            }
            let s = g.bound - used;
            if !(s > 0.0) {
                return None;
            }
            phi -= s.ln();
        }
        let v = f + mu * phi;
        v.is_finite().then_some(v)
    }

    /// Newton direction `(dx, dt)` and the directional derivative `gᵀd`.
    fn newton_direction(&self) -> Result<(DVector<f64>, Vec<Vec<f64>>, f64)> {
        let p = self.prob.n_vars;
        let mu = self.mu;
        let mut grad = DVector::zeros(p);
        let mut hess = DMatrix::zeros(p, p);
        let breakdown =
            || Error::NumericalBreakdown("iterate left the positive definite cone".into());
        for o in &self.prob.objective {
            let (_, s) = chol_logdet_inv(&o.eval(&self.x), true).ok_or_else(breakdown)?;
            o.accumulate(&s.unwrap(), 1.0, &mut grad, &mut hess);
        }
        for b in &self.prob.lmis {
            let (_, s) = chol_logdet_inv(&b.eval(&self.x), true).ok_or_else(breakdown)?;
            b.accumulate(&s.unwrap(), mu, &mut grad, &mut hess);
        }

        let mut groups = Vec::with_capacity(self.prob.groups.len());
        for (g, tg) in self.prob.groups.iter().zip(&self.t) {
            let k = g.members.len();
            let (mut d, mut c, mut gt) = (vec![0.0; k], vec![0.0; k], vec![0.0; k]);
            let slack = g.bound
                - g.members
                    .iter()
                    .zip(tg)
                    .map(|(&(_, w), &ta)| w * ta)
                    .sum::<f64>();
            for (a, (&(v, w), &ta)) in g.members.iter().zip(tg).enumerate() {
                let (pa, qa) = (ta - self.x[v], ta + self.x[v]);
                let (ip2, iq2) = (1.0 / (pa * pa), 1.0 / (qa * qa));
                d[a] = ip2 + iq2;
                c[a] = iq2 - ip2;
                gt[a] = mu * (-1.0 / pa - 1.0 / qa + w / slack);
                grad[v] += mu * (1.0 / pa - 1.0 / qa);
                hess[(v, v)] += mu * d[a];
            }
            // Schur complement of the t block: H_xx −= C H_tt⁻¹ Cᵀ.
            let denom = slack * slack
                + g.members
                    .iter()
                    .zip(&d)
                    .map(|(&(_, w), &da)| w * w / da)
                    .sum::<f64>();
            for (a, &(va, wa)) in g.members.iter().enumerate() {
                for (b, &(vb, wb)) in g.members.iter().enumerate() {
                    let mut inv = -(wa / d[a]) * (wb / d[b]) / denom;
                    if a == b {
                        inv += 1.0 / d[a];
                    }
                    hess[(va, vb)] -= mu * c[a] * c[b] * inv;
                }
            }
            groups.push(GroupTerms { d, c, gt, slack });
        }

        // rhs = −g_x + C H_tt⁻¹ g_t
        let mut rhs = -grad.clone();
        for (g, gd) in self.prob.groups.iter().zip(&groups) {
            let y = self.htt_inv_apply(g, gd, &gd.gt);
            for (a, &(v, _)) in g.members.iter().enumerate() {
                rhs[v] += gd.c[a] * y[a];
            }
        }

        let dx = solve_spd(hess, &rhs)?;

        let mut dt = Vec::with_capacity(groups.len());
        let mut gtd = grad.dot(&dx);
        for (g, gd) in self.prob.groups.iter().zip(&groups) {
            // dt = H_tt⁻¹(−g_t − Cᵀ dx); the μ in H_tt and C cancels.
            let r: Vec<f64> = g
                .members
                .iter()
                .enumerate()
                .map(|(a, &(v, _))| -gd.gt[a] / mu - gd.c[a] * dx[v])
                .collect();
            let step = self.htt_inv_apply(g, gd, &r);
            gtd += gd.gt.iter().zip(&step).map(|(a, b)| a * b).sum::<f64>();
            dt.push(step);
        }
        Ok((dx, dt, gtd))
    }

    /// `(D + ωωᵀ/s²)⁻¹ r` by Sherman–Morrison.
    fn htt_inv_apply(&self, g: &AbsGroup, gd: &GroupTerms, r: &[f64]) -> Vec<f64> {
        let denom = gd.slack * gd.slack
            + g.members
                .iter()
                .zip(&gd.d)
                .map(|(&(_, w), &da)| w * w / da)
                .sum::<f64>();
        let proj: f64 = g
            .members
            .iter()
            .zip(&gd.d)
            .zip(r)
            .map(|((&(_, w), &da), &ra)| w * ra / da)
            .sum();
        g.members
            .iter()
            .zip(&gd.d)
            .zip(r)
            .map(|((&(_, w), &da), &ra)| ra / da - (w / da) * proj / denom)
            .collect()
    }

    fn trial(
        &self,
        dx: &DVector<f64>,
        dt: &[Vec<f64>],
        alpha: f64,
    ) -> (DVector<f64>, Vec<Vec<f64>>) {
        let xn = &self.x + dx * alpha;
        let tn = self
            .t
            .iter()
            .zip(dt)
            .map(|(tg, dg)| tg.iter().zip(dg).map(|(a, b)| a + alpha * b).collect())
            .collect();
        (xn, tn)
    }

    /// Newton's method on the barrier subproblem at parameter `mu`.
    pub fn center(&mut self, mu: f64, max_iter: usize, stage: &'static str) -> Result<usize> {
        self.mu = mu;
        let mut prev_decrement = f64::INFINITY;
        for iter in 0..max_iter {
            let (dx, dt, gtd) = self.newton_direction()?;
            let decrement = -gtd / mu;
            if !decrement.is_finite() {
                return Err(Error::NumericalBreakdown(format!(
                    "{stage}: non-finite Newton decrement"
                )));
            }
            if decrement <= 1e-10 {
                return Ok(iter);
            }
            if decrement <= 1e-8 {
                // Quadratic convergence region: one full step finishes.
                let (xn, tn) = self.trial(&dx, &dt, 1.0);
                if self.value(&xn, &tn, mu).is_some() {
                    self.x = xn;
                    self.t = tn;
                    self.newton_steps += 1;
                    return Ok(iter + 1);
                }
            }
            let f0 = self.value(&self.x, &self.t, mu).ok_or_else(|| {
                Error::NumericalBreakdown(format!("{stage}: current iterate infeasible"))
            })?;
            if -gtd <= 1e3 * f64::EPSILON * (1.0 + f0.abs()) {
                // The predicted decrease is below the resolution of the barrier
                // value, so Armijo tests are noise: take feasible Newton steps
                // while the decrement keeps shrinking.
                if decrement >= prev_decrement {
                    return Ok(iter);
                }
                prev_decrement = decrement;
                let mut alpha = 1.0;
                while alpha > 1e-3 {
                    let (xn, tn) = self.trial(&dx, &dt, alpha);
                    if self.value(&xn, &tn, mu).is_some() {
                        self.x = xn;
                        self.t = tn;
                        break;
                    }
                    alpha *= 0.5;
                }
                self.newton_steps += 1;
                if alpha <= 1e-3 {
                    return Ok(iter);
                }
                continue;
            }
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha > 1e-14 {
                let (xn, tn) = self.trial(&dx, &dt, alpha);
                if let Some(f1) = self.value(&xn, &tn, mu) {
                    if f1 <= f0 + 0.25 * alpha * gtd {
                        self.x = xn;
                        self.t = tn;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            self.newton_steps += 1;
            log::trace!(
                "{stage}: mu={mu:.3e} iter={iter} decrement={decrement:.3e} step={alpha:.3e}"
            );
            if !accepted {
                // No descent at round-off level means the center is reached.
                if decrement < 1e-6 {
                    return Ok(iter);
                }
                return Err(Error::NumericalBreakdown(format!(
                    "{stage}: line search failed at mu={mu:.3e} (decrement {decrement:.3e})"
                )));
            }
        }
        Err(Error::IterationLimit {
            stage,
            iterations: max_iter,
        })
    }
}

/// Solves `H d = r` by Cholesky, adding a growing ridge if `H` is not
/// numerically positive definite.
fn solve_spd(mut h: DMatrix<f64>, r: &DVector<f64>) -> Result<DVector<f64>> {
    let n = h.nrows();
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    let scale = (0..n)
        .map(|i| h[(i, i)].abs())
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..12 {
        let mut hr = h.clone();
        if ridge > 0.0 {
            for i in 0..n {
                hr[(i, i)] += ridge;
            }
        }
        if let Some(chol) = hr.cholesky() {
            let d = chol.solve(r);
            if d.iter().all(|v| v.is_finite()) {
                return Ok(d);
            }
        }
        ridge = if ridge == 0.0 {
            1e-14 * scale
        } else {
            ridge * 100.0
        };
    }
    Err(Error::NumericalBreakdown(
        "Newton system is not positive definite".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// max log det W s.t. W ⪯ C, scalar: optimum W = C.
    #[test]
    fn scalar_bound() {
        let mut obj = AffineSym::new(DMatrix::zeros(1, 1));
        obj.add_sym(0, 0, 0, 1.0);
        let mut lmi = AffineSym::new(DMatrix::from_element(1, 1, 3.0));
        lmi.add_sym(0, 0, 0, -1.0);
        let prob = BarrierProblem {
            n_vars: 1,
            objective: vec![obj],
            lmis: vec![lmi],
            groups: vec![],
        };
        let mut b = Barrier::new(&prob, DVector::from_element(1, 1.0)).unwrap();
        let mut mu = 1.0;
        while mu > 1e-10 {
            b.center(mu, 100, "test").unwrap();
            if (mu - 1e-6).abs() < 1e-12 {
                // Central multiplier μ/(3−w) = (1+μ)/3.
                assert!((b.multipliers()[0][(0, 0)] - (1.0 + mu) / 3.0).abs() < 1e-8);
            }
            mu *= 0.1;
        }
        // Central point: 1/w = μ/(3−w) ⇒ w = 3/(1+μ).
        assert!((b.x()[0] - 3.0 / (1.0 + b.mu())).abs() < 1e-9);
    }

    /// max log det [[1, z],[z, 1]] s.t. |z| ≤ 0.3 plus a shift pushing z out:
    /// max log(1 − z²)... with objective log(1+ z) and bound, optimum z = 0.3.
    #[test]
    fn group_bound_active() {
        let mut obj = AffineSym::new(DMatrix::from_element(1, 1, 1.0));
        obj.add_sym(0, 0, 0, 1.0);
        let mut lmi = AffineSym::new(DMatrix::from_element(1, 1, 5.0));
        lmi.add_sym(0, 0, 0, 1.0);
        let prob = BarrierProblem {
            n_vars: 1,
            objective: vec![obj],
            lmis: vec![lmi],
            groups: vec![AbsGroup {
                members: vec![(0, 2.0)],
                bound: 0.6,
            }],
        };
        let mut b = Barrier::new(&prob, DVector::zeros(1)).unwrap();
        let mut mu = 1.0;
        while mu > 1e-11 {
            b.center(mu, 100, "test").unwrap();
            mu *= 0.1;
        }
        assert!((b.x()[0] - 0.3).abs() < 1e-8);
    }
}
