//! Fast variant: coordinate-wise type-II likelihood maximization over a growing
//! active set, with incremental posterior updates.

use super::{relative_change, SolverConfig, SolverOutcome, UlProblem};
use crate::error::Result;
use crate::numeric::{CMat, CVec, C64, ONE, ZERO};
use crate::sbl::emvb::m_steps;
use crate::ul::{build_measurement, MeasurementPack, UlGridEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Add,
    Reestimate,
    Prune,
    Skip,
}

/// Active-set posterior and the caches it is built from.
#[derive(Debug, Clone, PartialEq)]
pub struct FastState {
    /// Active indices, in insertion order.
    pub active: Vec<usize>,
    /// Precision per vectorized index; `INFINITY` outside the active set.
    pub alpha: Vec<f64>,
    /// Posterior mean over the active set.
    pub mean: CVec,
    /// Posterior covariance over the active set.
    pub cov: CMat,
    /// `diag(Phi^H Phi)`
    pub gram_diag: Vec<f64>,
    /// `Phi^H y`
    pub proj: CVec,
    pub noise_var: f64,
}

/// Sparsity (`p`) and quality (`q`) factors of one index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Factors {
    /// Including the index itself when active.
    pub big_p: f64,
    pub big_q: C64,
    /// Leave-one-out values.
    pub p: f64,
    pub q: C64,
}

/// Per-coordinate objective `log a - log(a + p) + |q|^2 / (a + p)`; zero at `a = inf`.
pub fn coordinate_objective(alpha: f64, p: f64, q: C64) -> f64 {
    if alpha.is_infinite() {
        return 0.0;
    }
    alpha.ln() - (alpha + p).ln() + q.norm_sqr() / (alpha + p)
}

/// Maximizer of the per-coordinate objective; `INFINITY` when `|q|^2 <= p`.
pub fn optimal_alpha(p: f64, q: C64) -> f64 {
    let q2 = q.norm_sqr();
    if q2 > p {
        p * p / (q2 - p)
    } else {
        f64::INFINITY
    }
}

impl FastState {
    pub fn empty(pack: &MeasurementPack, y: &CMat, noise_var: f64) -> Self {
        Self {
            active: Vec::new(),
            alpha: vec![f64::INFINITY; pack.dim()],
            mean: CVec::zeros(0),
            cov: CMat::zeros(0, 0),
            gram_diag: pack.gram_diag(),
            proj: pack.project(y),
            noise_var,
        }
    }

    /// Recomputes caches for a new operator and the active posterior from scratch.
    pub fn rebind(&mut self, pack: &MeasurementPack, y: &CMat) -> Result<()> {
        self.gram_diag = pack.gram_diag();
        self.proj = pack.project(y);
        self.refresh(pack)
    }

    /// Batch posterior over the current active set.
    pub fn refresh(&mut self, pack: &MeasurementPack) -> Result<()> {
        let (cov, mean) = self.batch_posterior(pack)?;
        self.cov = cov;
        self.mean = mean;
        Ok(())
    }

    /// `((Phi_B^H Phi_B)/s2 + diag(alpha_B))^{-1}` and the matching mean.
    pub fn batch_posterior(&self, pack: &MeasurementPack) -> Result<(CMat, CVec)> {
        let k = self.active.len();
        let s2 = self.noise_var;
        let mut prec = CMat::from_fn(k, k, |i, j| pack.gram_entry(self.active[i], self.active[j]) / s2);
        for i in 0..k {
            prec[(i, i)] += C64::new(self.alpha[self.active[i]], 0.0);
        }
        if k == 0 {
            return Ok((prec, CVec::zeros(0)));
        }
        let cov = crate::numeric::hpd_cholesky(prec)
            .ok_or_else(|| crate::Error::Numerical("active-set precision is not positive definite".into()))?
            .inverse();
        let hb = CVec::from_fn(k, |i, _| self.proj[self.active[i]]);
        let mean = &cov * hb / C64::new(s2, 0.0);
        Ok((cov, mean))
    }

    fn cross(&self, pack: &MeasurementPack, i: usize) -> CVec {
        CVec::from_fn(self.active.len(), |r, _| pack.gram_entry(self.active[r], i))
    }

    fn position(&self, i: usize) -> Option<usize> {
        self.active.iter().position(|&a| a == i)
    }

    /// Dense gain matrix with the active mean scattered into place.
    pub fn gains(&self, num_angles: usize, num_delays: usize) -> CMat {
        let mut g = CVec::from_element(num_angles * num_delays, ZERO);
        for (r, &i) in self.active.iter().enumerate() {
            g[i] = self.mean[r];
        }
        CMat::from_column_slice(num_angles, num_delays, g.as_slice())
    }
}

pub fn sparsity_factors(i: usize, state: &FastState, pack: &MeasurementPack) -> Factors {
    let s2 = state.noise_var;
    let v = state.cross(pack, i);
    let sv = &state.cov * &v;
    let big_p = state.gram_diag[i] / s2 - v.dotc(&sv).re / (s2 * s2);
    let big_q = state.proj[i] / s2 - v.dotc(&state.mean) / s2;
    leave_one_out(big_p, big_q, state.alpha[i])
}

fn leave_one_out(big_p: f64, big_q: C64, alpha: f64) -> Factors {
    if alpha.is_finite() {
        let den = alpha - big_p;
        if den <= 0.0 {
            return Factors { big_p, big_q, p: f64::INFINITY, q: big_q };
        }
        Factors { big_p, big_q, p: alpha * big_p / den, q: big_q * (alpha / den) }
    } else {
        Factors { big_p, big_q, p: big_p, q: big_q }
    }
}

/// Below this (relative to `||phi_i||^2 / s2`) an inactive column is taken to lie in the active span.
const SPAN_TOL: f64 = 1e-10;

/// Candidate move for one index and the objective increment it would bring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub action: Action,
    pub delta: f64,
    pub alpha: f64,
    pub factors: Factors,
}

fn propose_from(i: usize, f: Factors, state: &FastState) -> Proposal {
    let old = state.alpha[i];
    let active = old.is_finite();
    let skip = Proposal { action: Action::Skip, delta: 0.0, alpha: old, factors: f };
    if !active && f.big_p <= SPAN_TOL * state.gram_diag[i] / state.noise_var {
        return skip;
    }
    let new = if f.p.is_finite() { optimal_alpha(f.p, f.q) } else { f64::INFINITY };
    let (action, delta) = match (active, new.is_finite()) {
        (false, false) => return skip,
        (false, true) => (Action::Add, coordinate_objective(new, f.p, f.q)),
        (true, true) => (Action::Reestimate, coordinate_objective(new, f.p, f.q) - coordinate_objective(old, f.p, f.q)),
        (true, false) => (Action::Prune, if f.p.is_finite() { -coordinate_objective(old, f.p, f.q) } else { 0.0 }),
    };
    Proposal { action, delta, alpha: new, factors: f }
}

pub fn propose(i: usize, state: &FastState, pack: &MeasurementPack) -> Proposal {
    propose_from(i, sparsity_factors(i, state, pack), state)
}

pub fn apply(state: &mut FastState, pack: &MeasurementPack, i: usize, p: &Proposal) {
    match p.action {
        Action::Add => add(state, pack, i, p.alpha, &p.factors),
        Action::Reestimate => reestimate(state, i, p.alpha),
        Action::Prune => prune(state, i),
        Action::Skip => {}
    }
}

/// Decides the action for index `i`, applies it, and returns it with the
/// objective increment.
pub fn decide_and_update(i: usize, state: &mut FastState, pack: &MeasurementPack) -> (Action, f64) {
    let p = propose(i, state, pack);
    apply(state, pack, i, &p);
    (p.action, p.delta)
}

fn add(state: &mut FastState, pack: &MeasurementPack, i: usize, alpha: f64, f: &Factors) {
    let k = state.active.len();
    let s2 = state.noise_var;
    let v = state.cross(pack, i);
    let e = &state.cov * &v / C64::new(s2, 0.0);
    let sii = 1.0 / (alpha + f.big_p);
    let mu_i = f.big_q * sii;
    let mut cov = CMat::zeros(k + 1, k + 1);
    let upd = &state.cov + &e * e.adjoint() * C64::new(sii, 0.0);
    cov.view_mut((0, 0), (k, k)).copy_from(&upd);
    for r in 0..k {
        cov[(r, k)] = -e[r] * sii;
        cov[(k, r)] = -e[r].conj() * sii;
    }
    cov[(k, k)] = C64::new(sii, 0.0);
    let mut mean = CVec::zeros(k + 1);
    mean.rows_mut(0, k).copy_from(&(&state.mean - &e * mu_i));
    mean[k] = mu_i;
    state.cov = cov;
    state.mean = mean;
    state.active.push(i);
    state.alpha[i] = alpha;
}

fn reestimate(state: &mut FastState, i: usize, alpha: f64) {
    let j = state.position(i).expect("re-estimate of an inactive index");
    let old = state.alpha[i];
    state.alpha[i] = alpha;
    if alpha == old {
        return;
    }
    let s = state.cov.column(j).clone_owned();
    let kappa = 1.0 / (state.cov[(j, j)].re + 1.0 / (alpha - old));
    let mu_j = state.mean[j];
    state.cov -= &s * s.adjoint() * C64::new(kappa, 0.0);
    state.mean -= &s * (mu_j * kappa);
}

fn prune(state: &mut FastState, i: usize) {
    let j = state.position(i).expect("prune of an inactive index");
    let s = state.cov.column(j).clone_owned();
    let sjj = state.cov[(j, j)].re;
    let mu_j = state.mean[j];
    let cov = &state.cov - &s * s.adjoint() / C64::new(sjj, 0.0);
    let mean = &state.mean - &s * (mu_j / sjj);
    state.cov = cov.remove_row(j).remove_column(j);
    state.mean = mean.remove_row(j);
    state.active.remove(j);
    state.alpha[i] = f64::INFINITY;
}

/// Factors of every index, kept current across actions.
///
/// Every action changes the marginal covariance `C = s2 I + Phi_B A^-1 Phi_B^H`
/// by `delta phi_i phi_i^H`, so the factors follow from Sherman-Morrison with
/// `xi = Phi^H C^-1 phi_i`, which the separable operator gives without forming
/// `Phi`.
struct FactorCache {
    big_p: Vec<f64>,
    big_q: Vec<C64>,
}

impl FactorCache {
    fn build(state: &FastState, pack: &MeasurementPack) -> Self {
        let s2 = state.noise_var;
        let (n, l) = (pack.num_angles(), pack.num_delays());
        let mut big_p: Vec<f64> = state.gram_diag.iter().map(|d| d / s2).collect();
        let mut big_q: Vec<C64> = state.proj.iter().map(|q| q / s2).collect();
        if state.active.is_empty() {
            return Self { big_p, big_q };
        }
        // Phi^H Phi_B mu through the operator.
        let cm = pack.project(&pack.apply(&state.gains(n, l)));
        for (q, c) in big_q.iter_mut().zip(cm.iter()) {
            *q -= c / s2;
        }
        // phi_m^H Phi_B cov Phi_B^H phi_m: the Gram factorizes over (delay, angle), so
        // for each delay tap the covariance folds into an N x N angle-domain matrix.
        let ga = &pack.gram_angle;
        for lm in 0..l {
            let w: Vec<C64> = state.active.iter().map(|&a| pack.gram_delay[(a / n, lm)]).collect();
            let mut folded = CMat::zeros(n, n);
            for (s, &bs) in state.active.iter().enumerate() {
                for (r, &ar) in state.active.iter().enumerate() {
                    folded[(ar % n, bs % n)] += w[r].conj() * state.cov[(r, s)] * w[s];
                }
            }
            let t = folded * ga;
            for nm in 0..n {
                let quad: f64 = ga.column(nm).iter().zip(t.column(nm).iter()).map(|(g, x)| (g.conj() * x).re).sum();
                big_p[lm * n + nm] -= quad / (s2 * s2);
            }
        }
        Self { big_p, big_q }
    }

    fn factors<'a>(&'a self, state: &'a FastState) -> impl Iterator<Item = Factors> + 'a {
        (0..self.big_p.len()).map(move |m| leave_one_out(self.big_p[m], self.big_q[m], state.alpha[m]))
    }

    /// `Phi^H C^-1 phi_i` under the current active set.
    fn direction(state: &FastState, pack: &MeasurementPack, i: usize) -> CVec {
        let s2 = state.noise_var;
        let n = pack.num_angles();
        let e = &state.cov * state.cross(pack, i) / C64::new(s2, 0.0);
        // A~ (E_i - W) C with W the scattered `e`: only the touched delay columns of A~ W matter.
        let mut aw = CMat::zeros(pack.num_antennas(), pack.num_delays());
        aw.column_mut(i / n).axpy(ONE, &pack.a_tilde.column(i % n), ONE);
        for (&a, x) in state.active.iter().zip(e.iter()) {
            aw.column_mut(a / n).axpy(-x, &pack.a_tilde.column(a % n), ONE);
        }
        let u = aw * &pack.c / C64::new(s2, 0.0);
        pack.project(&u)
    }

    /// Folds in the change of `1 / alpha_i` by `delta`; `xi` from [`Self::direction`] before the change.
    fn update(&mut self, i: usize, delta: f64, xi: &CVec) {
        let coef = delta / (1.0 + delta * self.big_p[i]);
        let qi = self.big_q[i];
        for (m, x) in xi.iter().enumerate() {
            self.big_p[m] -= coef * x.norm_sqr();
            self.big_q[m] -= x * (qi * coef);
        }
    }
}

fn inverse(alpha: f64) -> f64 {
    if alpha.is_finite() {
        1.0 / alpha
    } else {
        0.0
    }
}

/// Rebuild the active posterior from scratch after at least this many
/// incremental updates; the interval grows with the active set so the O(dim k^2)
/// rebuild costs no more per action than an incremental update.
const REFRESH_EVERY: usize = 32;

/// Repeatedly applies the single move with the largest objective increment
/// until no move gains more than `inner_tol` or the action budget is spent.
/// The active posterior is rebuilt on entry. Returns the number of actions taken.
pub fn fast_e_step(state: &mut FastState, pack: &MeasurementPack, cfg: &SolverConfig) -> Result<usize> {
    let mut actions = 0;
    state.refresh(pack)?;
    let mut cache = FactorCache::build(state, pack);
    let mut since_refresh = 0;
    while actions < cfg.max_actions {
        let best = cache
            .factors(state)
            .enumerate()
            .map(|(i, f)| (i, propose_from(i, f, state)))
            .filter(|(_, p)| p.action != Action::Skip)
            .max_by(|a, b| a.1.delta.total_cmp(&b.1.delta));
        let Some((i, p)) = best else { break };
        if !(p.delta > cfg.inner_tol) {
            break;
        }
        let xi = FactorCache::direction(state, pack, i);
        let delta = inverse(p.alpha) - inverse(state.alpha[i]);
        apply(state, pack, i, &p);
        actions += 1;
        since_refresh += 1;
        if since_refresh >= REFRESH_EVERY.max(state.active.len()) {
            since_refresh = 0;
            state.refresh(pack)?;
            cache = FactorCache::build(state, pack);
        } else {
            cache.update(i, delta, &xi);
        }
    }
    Ok(actions)
}

/// Outer EM loop with the fast posterior update; offsets and Doppler are
/// updated from the active-set mean.
pub fn run_fast_emvb(problem: &UlProblem, cfg: &SolverConfig) -> Result<(SolverOutcome, FastState)> {
    let (na, nl) = (problem.grid.num_angles(), problem.grid.num_delays);
    let mut beta = vec![0.0; na];
    let mut upsilon = vec![0.0; nl];
    let pack = build_measurement(problem.dict, problem.training, &upsilon, &beta, problem.sample_period)?;
    let mut state = FastState::empty(&pack, problem.y, problem.solver_noise_var());
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut prev = CVec::zeros(na * nl);
    for it in 0..cfg.max_iter {
        let pack = build_measurement(problem.dict, problem.training, &upsilon, &beta, problem.sample_period)?;
        if it > 0 {
            // the E-step rebuilds the posterior itself
            state.gram_diag = pack.gram_diag();
            state.proj = pack.project(problem.y);
        }
        fast_e_step(&mut state, &pack, cfg)?;
        let gains = state.gains(na, nl);
        (beta, upsilon) = m_steps(&gains, &pack, problem, &beta, &upsilon, cfg)?;
        iterations += 1;
        let g = CVec::from_column_slice(gains.as_slice());
        if cfg.keep_trace {
            trace.push(UlGridEstimate { gains, beta: beta.clone(), upsilon: upsilon.clone() });
        }
        let change = relative_change(&g, &prev);
        prev = g;
        if change < cfg.tol {
            break;
        }
    }
    let estimate = UlGridEstimate::from_gain_vector(&prev, na, nl, beta, upsilon);
    Ok((SolverOutcome { estimate, iterations, trace }, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{GeometryConfig, PathParams, UserChannel};
    use crate::numeric::cn;
    use crate::ul::{build_dictionaries, simulate_ul_rx, AngleGridKind, GridConfig, UlTrainingConfig};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Small random operator with a real Kronecker structure.
    fn random_problem(seed: u64) -> (MeasurementPack, CMat, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = GridConfig::new(AngleGridKind::Midpoint, 3, 2);
        let geom = GeometryConfig { num_antennas: 4, antenna_spacing: 0.5, dl_wavelength: 1.0, ul_wavelength: 1.0 };
        let dict = build_dictionaries(&grid, &geom);
        let t: Vec<C64> = (0..2).map(|_| cn(&mut rng, 1.0)).collect();
        let pack = build_measurement(&dict, &t, &[300.0, -500.0], &[0.01, -0.02, 0.0], 5e-8).unwrap();
        let y = CMat::from_fn(4, 2, |_, _| cn(&mut rng, 1.0));
        (pack, y, rng.random_range(0.1..1.0))
    }

    /// Dense log-evidence `-ln|C| - y^H C^{-1} y` (constant dropped), `C = s2 I + Phi_B diag(1/alpha_B) Phi_B^H`.
    fn log_evidence(pack: &MeasurementPack, y: &CMat, state: &FastState) -> f64 {
        let phi = pack.phi();
        let n = phi.nrows();
        let mut c = CMat::identity(n, n) * C64::new(state.noise_var, 0.0);
        for &i in &state.active {
            let col = phi.column(i);
            c += col * col.adjoint() / C64::new(state.alpha[i], 0.0);
        }
        let yv = CVec::from_column_slice(y.as_slice());
        let chol = crate::numeric::hpd_cholesky(c).unwrap();
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|z| z.re.ln()).sum::<f64>();
        let quad = yv.dotc(&chol.solve(&yv)).re;
        -logdet - quad
    }

    #[test]
    fn decision_rule_examples() {
        assert!((optimal_alpha(1.0, C64::new(2f64.sqrt(), 0.0)) - 1.0).abs() < 1e-12);
        assert!(optimal_alpha(1.0, C64::new(1.0, 0.0)).is_infinite());
        assert_eq!(coordinate_objective(f64::INFINITY, 1.0, C64::new(3.0, 0.0)), 0.0);
    }

    #[test]
    fn empty_set_factors_have_no_deflation() {
        let (pack, y, s2) = random_problem(1);
        let state = FastState::empty(&pack, &y, s2);
        let proj = pack.project(&y);
        for i in 0..pack.dim() {
            let f = sparsity_factors(i, &state, &pack);
            assert!((f.big_p - pack.gram_entry(i, i).re / s2).abs() < 1e-12);
            assert!((f.big_q - proj[i] / s2).norm() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn factors_match_leave_one_out_inverse(seed in any::<u64>()) {
            let (pack, y, s2) = random_problem(seed);
            let mut state = FastState::empty(&pack, &y, s2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
            for i in [0usize, 2, 5] {
                state.active.push(i);
                state.alpha[i] = rng.random_range(0.2..2.0);
            }
            state.refresh(&pack).unwrap();
            let phi = pack.phi();
            let yv = CVec::from_column_slice(y.as_slice());
            let n = phi.nrows();
            for i in 0..pack.dim() {
                // oracle: C_{-i} = s2 I + sum_{j in B, j != i} phi_j phi_j^H / alpha_j
                let mut c = CMat::identity(n, n) * C64::new(s2, 0.0);
                for &j in state.active.iter().filter(|&&j| j != i) {
                    let col = phi.column(j);
                    c += col * col.adjoint() / C64::new(state.alpha[j], 0.0);
                }
                let cinv = c.try_inverse().unwrap();
                let col = phi.column(i).clone_owned();
                let p = col.dotc(&(&cinv * &col)).re;
                let q = col.dotc(&(&cinv * &yv));
                let f = sparsity_factors(i, &state, &pack);
                prop_assert!((f.p - p).abs() < 1e-9 * (1.0 + p.abs()), "p {} vs {}", f.p, p);
                prop_assert!((f.q - q).norm() < 1e-9 * (1.0 + q.norm()));
            }
        }

        #[test]
        fn incremental_posterior_and_evidence(seed in any::<u64>()) {
            let (pack, y, s2) = random_problem(seed);
            let mut state = FastState::empty(&pack, &y, s2);
            let mut ev = log_evidence(&pack, &y, &state);
            for step in 0..30 {
                let i = (step * 5 + seed as usize) % pack.dim();
                let (a, delta) = decide_and_update(i, &mut state, &pack);
                let (cov, mean) = state.batch_posterior(&pack).unwrap();
                prop_assert!((&cov - &state.cov).norm() < 1e-8 * (1.0 + cov.norm()));
                prop_assert!((&mean - &state.mean).norm() < 1e-8 * (1.0 + mean.norm()));
                let now = log_evidence(&pack, &y, &state);
                prop_assert!(delta >= -1e-12);
                if a != Action::Skip {
                    prop_assert!((now - ev - delta).abs() < 1e-8 * (1.0 + ev.abs()), "{a:?}: {} vs {}", now - ev, delta);
                }
                ev = now;
            }
        }
    }

    #[test]
    fn cached_factors_track_incremental_updates() {
        for seed in 0..8u64 {
            let (pack, y, s2) = random_problem(seed);
            let mut state = FastState::empty(&pack, &y, s2);
            let mut cache = FactorCache::build(&state, &pack);
            for step in 0..25 {
                let i = (step * 7 + seed as usize) % pack.dim();
                let p = propose(i, &state, &pack);
                let xi = FactorCache::direction(&state, &pack, i);
                let delta = inverse(p.alpha) - inverse(state.alpha[i]);
                apply(&mut state, &pack, i, &p);
                cache.update(i, delta, &xi);
                for (m, f) in cache.factors(&state).enumerate() {
                    let want = sparsity_factors(m, &state, &pack);
                    assert!((f.big_p - want.big_p).abs() < 1e-8 * (1.0 + want.big_p.abs()));
                    assert!((f.big_q - want.big_q).norm() < 1e-8 * (1.0 + want.big_q.norm()));
                }
            }
            let rebuilt = FactorCache::build(&state, &pack);
            for (m, f) in rebuilt.factors(&state).enumerate() {
                let want = sparsity_factors(m, &state, &pack);
                assert!((f.big_p - want.big_p).abs() < 1e-8 * (1.0 + want.big_p.abs()));
                assert!((f.big_q - want.big_q).norm() < 1e-8 * (1.0 + want.big_q.norm()));
            }
        }
    }

    #[test]
    fn reestimate_point_is_stationary() {
        let (pack, y, s2) = random_problem(3);
        let mut state = FastState::empty(&pack, &y, s2);
        for i in 0..pack.dim() {
            decide_and_update(i, &mut state, &pack);
        }
        for &i in &state.active.clone() {
            decide_and_update(i, &mut state, &pack);
            if !state.alpha[i].is_finite() {
                continue;
            }
            let f = sparsity_factors(i, &state, &pack);
            let a = optimal_alpha(f.p, f.q);
            let d = 1.0 / a - 1.0 / (a + f.p) - f.q.norm_sqr() / ((a + f.p) * (a + f.p));
            assert!(d.abs() * a < 1e-9);
            let at = coordinate_objective(a, f.p, f.q);
            assert!(at > 0.0);
            assert!(at >= coordinate_objective(a * 1.1, f.p, f.q));
            assert!(at >= coordinate_objective(a * 0.9, f.p, f.q));
        }
    }

    #[test]
    fn noiseless_toy_support_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let grid = GridConfig::new(AngleGridKind::Sine, 8, 4);
        let geom = GeometryConfig { num_antennas: 4, antenna_spacing: 0.5, dl_wavelength: 1.0, ul_wavelength: 1.0 };
        let training = UlTrainingConfig::random_phase(0, 4, 16, &mut rng);
        let ts = 5e-8;
        let cells = [(1usize, 0usize), (4, 2), (6, 3)];
        let user = UserChannel {
            user_index: 0,
            paths: cells
                .iter()
                .map(|&(n, l)| PathParams { delay: l as f64 * ts, doppler: 0.0, angle: grid.angles[n], gain: cn(&mut rng, 1.0) + C64::new(0.3, 0.0) })
                .collect(),
        };
        let dict = build_dictionaries(&grid, &geom);
        let y = simulate_ul_rx(&user, &training, &geom, 4, ts, 0.0, &mut rng).unwrap();
        let problem = UlProblem { dict: &dict, grid: &grid, training: &training.training, y: &y, noise_var: 0.0, sample_period: ts };
        let (out, state) = run_fast_emvb(&problem, &SolverConfig::default()).unwrap();
        let mut support = state.active.clone();
        support.sort_unstable();
        let mut want: Vec<usize> = cells.iter().map(|&(n, l)| l * 8 + n).collect();
        want.sort_unstable();
        assert_eq!(support, want);
        assert!(state.active.len() <= 16 * 4);
        let truth = UlGridEstimate::from_paths(&user, &grid, &training, ts);
        assert!((&out.estimate.gains - &truth.gains).norm() / truth.gains.norm() < 1e-6);
    }
}
