//! Dynamic-trajectory Hamiltonian transitions (multinomial NUTS with the
//! generalized no-U-turn criterion) over a diagonal Euclidean metric.

use rand::Rng;
use rand_distr::StandardNormal;

/// A differentiable unnormalized log density.
pub trait LogDensity {
    fn dim(&self) -> usize;
    /// Log density at `q`; fills `grad`. A non-finite return marks an invalid
    /// state (the trajectory treats it as a divergence).
    fn log_density_grad(&self, q: &[f64], grad: &mut [f64]) -> f64;
}

/// Hamiltonian error beyond which a trajectory counts as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

#[derive(Debug, Clone)]
pub struct NutsOptions {
    pub max_treedepth: usize,
}

impl Default for NutsOptions {
    fn default() -> Self {
        Self { max_treedepth: 10 }
    }
}

/// Result of one transition.
pub struct Transition {
    pub q: Vec<f64>,
    pub logp: f64,
    pub grad: Vec<f64>,
    pub divergent: bool,
    pub depth: usize,
    pub accept_stat: f64,
    pub energy: f64,
    pub n_leapfrog: usize,
}

#[derive(Clone)]
struct Phase {
    q: Vec<f64>,
    p: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

struct Tree {
    // trajectory endpoints
    minus: Phase,
    plus: Phase,
    // multinomial proposal from this subtree
    prop_q: Vec<f64>,
    prop_logp: f64,
    prop_grad: Vec<f64>,
    log_sum_w: f64,
    p_sum: Vec<f64>,
    divergent: bool,
    turning: bool,
    sum_accept: f64,
    n_leapfrog: usize,
}

fn kinetic(p: &[f64], inv_mass: &[f64]) -> f64 {
    0.5 * p.iter().zip(inv_mass).map(|(pi, m)| pi * pi * m).sum::<f64>()
}

fn leapfrog<T: LogDensity>(target: &T, phase: &mut Phase, eps: f64, inv_mass: &[f64]) -> bool {
    let d = phase.q.len();
    for i in 0..d {
        phase.p[i] += 0.5 * eps * phase.grad[i];
    }
    for i in 0..d {
        phase.q[i] += eps * inv_mass[i] * phase.p[i];
    }
    phase.logp = target.log_density_grad(&phase.q, &mut phase.grad);
    if !phase.logp.is_finite() {
        return false;
    }
    for i in 0..d {
        phase.p[i] += 0.5 * eps * phase.grad[i];
    }
    true
}

/// Generalized U-turn check: momentum sum against both rim momenta.
fn is_turning(p_sum: &[f64], p_minus: &[f64], p_plus: &[f64], inv_mass: &[f64]) -> bool {
    let mut dot_minus = 0.0;
    let mut dot_plus = 0.0;
    for i in 0..p_sum.len() {
        dot_minus += p_sum[i] * inv_mass[i] * p_minus[i];
        dot_plus += p_sum[i] * inv_mass[i] * p_plus[i];
    }
    !(dot_minus.is_finite() && dot_plus.is_finite()) || dot_minus < 0.0 || dot_plus < 0.0
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a == f64::INFINITY || b == f64::INFINITY {
        return f64::INFINITY;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn leaf<T: LogDensity>(
    target: &T,
    edge: &Phase,
    dir: f64,
    eps: f64,
    inv_mass: &[f64],
    h0: f64,
) -> Tree {
    let mut phase = edge.clone();
    let ok = leapfrog(target, &mut phase, dir * eps, inv_mass);
    let energy = if ok { -phase.logp + kinetic(&phase.p, inv_mass) } else { f64::INFINITY };
    let energy_err = energy - h0;
    // one-sided: only energy blow-ups are divergences; a large energy drop
    // just dominates the multinomial weights
    let divergent = !ok || energy_err.is_nan() || energy_err > DIVERGENCE_THRESHOLD;
    let log_w = if divergent { f64::NEG_INFINITY } else { -energy_err };
    let accept = if energy_err.is_finite() { (-energy_err).exp().min(1.0) } else { 0.0 };
    Tree {
        prop_q: phase.q.clone(),
        prop_logp: phase.logp,
        prop_grad: phase.grad.clone(),
        p_sum: phase.p.clone(),
        minus: phase.clone(),
        plus: phase,
        log_sum_w: log_w,
        divergent,
        turning: false,
        sum_accept: accept,
        n_leapfrog: 1,
    }
}

fn build_tree<T: LogDensity, R: Rng>(
    target: &T,
    edge: &Phase,
    depth: usize,
    dir: f64,
    eps: f64,
    inv_mass: &[f64],
    h0: f64,
    rng: &mut R,
) -> Tree {
    if depth == 0 {
        return leaf(target, edge, dir, eps, inv_mass, h0);
    }
    let mut inner = build_tree(target, edge, depth - 1, dir, eps, inv_mass, h0, rng);
    if inner.divergent || inner.turning {
        return inner;
    }
    let inner_edge = if dir > 0.0 { inner.plus.clone() } else { inner.minus.clone() };
    let outer = build_tree(target, &inner_edge, depth - 1, dir, eps, inv_mass, h0, rng);

    // acceptance statistics accumulate over every evaluated leaf
    inner.n_leapfrog += outer.n_leapfrog;
    inner.sum_accept += outer.sum_accept;
    if outer.divergent || outer.turning {
        // invalid half: the whole subtree is discarded upstream
        inner.divergent |= outer.divergent;
        inner.turning |= outer.turning;
        return inner;
    }

    // multinomial selection between the half-trees
    let total = log_sum_exp(inner.log_sum_w, outer.log_sum_w);
    if (rng.random::<f64>().ln() + total) < outer.log_sum_w || outer.log_sum_w == f64::INFINITY {
        inner.prop_q = outer.prop_q;
        inner.prop_logp = outer.prop_logp;
        inner.prop_grad = outer.prop_grad;
    }
    inner.log_sum_w = total;

    // map the halves to absolute left/right for the junction U-turn checks
    let (rho_in, rho_out) = (inner.p_sum.clone(), outer.p_sum.clone());
    let (rho_left, rho_right, junction_left, junction_right) = if dir > 0.0 {
        (&rho_in, &rho_out, inner.plus.p.clone(), outer.minus.p.clone())
    } else {
        (&rho_out, &rho_in, outer.plus.p.clone(), inner.minus.p.clone())
    };
    if dir > 0.0 {
        inner.plus = outer.plus;
    } else {
        inner.minus = outer.minus;
    }
    for i in 0..inner.p_sum.len() {
        inner.p_sum[i] += rho_out[i];
    }
    let full = is_turning(&inner.p_sum, &inner.minus.p, &inner.plus.p, inv_mass);
    let mut rho_cross: Vec<f64> =
        rho_left.iter().zip(&junction_right).map(|(a, b)| a + b).collect();
    let cross1 = is_turning(&rho_cross, &inner.minus.p, &junction_right, inv_mass);
    for i in 0..rho_cross.len() {
        rho_cross[i] = rho_right[i] + junction_left[i];
    }
    let cross2 = is_turning(&rho_cross, &junction_left, &inner.plus.p, inv_mass);
    inner.turning = full || cross1 || cross2;
    inner
}

/// One NUTS transition from `(q0, logp0, grad0)`. Evaluates nothing at the
/// start point; callers pass a consistent triple.
#[allow(clippy::too_many_arguments)]
pub fn transition<T: LogDensity, R: Rng>(
    target: &T,
    q0: &[f64],
    logp0: f64,
    grad0: &[f64],
    eps: f64,
    inv_mass: &[f64],
    opts: &NutsOptions,
    rng: &mut R,
) -> Transition {
    let d = q0.len();
    let mut p0 = vec![0.0; d];
    for i in 0..d {
        // momentum ~ N(0, M) with M = diag(1/inv_mass)
        let z: f64 = rng.sample(StandardNormal);
        p0[i] = z / inv_mass[i].sqrt();
    }
    let h0 = -logp0 + kinetic(&p0, inv_mass);
    let start = Phase { q: q0.to_vec(), p: p0, grad: grad0.to_vec(), logp: logp0 };

    let mut tree = Tree {
        prop_q: start.q.clone(),
        prop_logp: start.logp,
        prop_grad: start.grad.clone(),
        p_sum: start.p.clone(),
        minus: start.clone(),
        plus: start,
        log_sum_w: 0.0,
        divergent: false,
        turning: false,
        sum_accept: 0.0,
        n_leapfrog: 0,
    };

    let mut depth = 0;
    while depth < opts.max_treedepth {
        let dir: f64 = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let edge = if dir > 0.0 { tree.plus.clone() } else { tree.minus.clone() };
        let sub = build_tree(target, &edge, depth, dir, eps, inv_mass, h0, rng);

        tree.n_leapfrog += sub.n_leapfrog;
        tree.sum_accept += sub.sum_accept;
        depth += 1;
        if sub.divergent || sub.turning {
            // invalid subtree: discard it entirely (no proposal, no weight)
            tree.divergent |= sub.divergent;
            break;
        }

        // progressive sampling: accept the new half with prob W_sub/W_tree
        let accept_new = if sub.log_sum_w == f64::INFINITY {
            1.0
        } else {
            (sub.log_sum_w - tree.log_sum_w).exp().min(1.0)
        };
        if rng.random::<f64>() < accept_new {
            tree.prop_q = sub.prop_q.clone();
            tree.prop_logp = sub.prop_logp;
            tree.prop_grad = sub.prop_grad.clone();
        }
        tree.log_sum_w = log_sum_exp(tree.log_sum_w, sub.log_sum_w);

        let rho_old = tree.p_sum.clone();
        let rho_new = sub.p_sum.clone();
        let (rho_left, rho_right, junction_left, junction_right) = if dir > 0.0 {
            (&rho_old, &rho_new, tree.plus.p.clone(), sub.minus.p.clone())
        } else {
            (&rho_new, &rho_old, sub.plus.p.clone(), tree.minus.p.clone())
        };
        if dir > 0.0 {
            tree.plus = sub.plus;
        } else {
            tree.minus = sub.minus;
        }
        for i in 0..tree.p_sum.len() {
            tree.p_sum[i] += rho_new[i];
        }

        let full = is_turning(&tree.p_sum, &tree.minus.p, &tree.plus.p, inv_mass);
        let mut rho_cross: Vec<f64> =
            rho_left.iter().zip(&junction_right).map(|(a, b)| a + b).collect();
        let cross1 = is_turning(&rho_cross, &tree.minus.p, &junction_right, inv_mass);
        for i in 0..rho_cross.len() {
            rho_cross[i] = rho_right[i] + junction_left[i];
        }
        let cross2 = is_turning(&rho_cross, &junction_left, &tree.plus.p, inv_mass);
        if full || cross1 || cross2 {
            break;
        }
    }

    let accept_stat =
        (tree.sum_accept / tree.n_leapfrog.max(1) as f64).clamp(0.0, 1.0);
    if tree.prop_q.iter().any(|v| !v.is_finite()) {
        return Transition {
            q: q0.to_vec(),
            logp: logp0,
            grad: grad0.to_vec(),
            divergent: true,
            depth,
            accept_stat: 0.0,
            energy: h0,
            n_leapfrog: tree.n_leapfrog,
        };
    }
    Transition {
        q: tree.prop_q,
        logp: tree.prop_logp,
        grad: tree.prop_grad,
        divergent: tree.divergent,
        depth,
        accept_stat,
        energy: h0,
        n_leapfrog: tree.n_leapfrog,
    }
}

/// Heuristic initial step size: double/halve until the one-step acceptance
/// probability crosses 1/2.
pub fn find_reasonable_step_size<T: LogDensity, R: Rng>(
    target: &T,
    q0: &[f64],
    inv_mass: &[f64],
    rng: &mut R,
) -> f64 {
    let d = q0.len();
    let mut grad = vec![0.0; d];
    let logp = target.log_density_grad(q0, &mut grad);
    if !logp.is_finite() {
        return 1e-3;
    }
    let mut eps = 1.0;
    let mut p = vec![0.0; d];
    for i in 0..d {
        let z: f64 = rng.sample(StandardNormal);
        p[i] = z / inv_mass[i].sqrt();
    }
    let h0 = -logp + kinetic(&p, inv_mass);
    let accept_logp = |eps: f64| -> f64 {
        let mut phase =
            Phase { q: q0.to_vec(), p: p.clone(), grad: grad.clone(), logp };
        if !leapfrog(target, &mut phase, eps, inv_mass) {
            return f64::NEG_INFINITY;
        }
        let h1 = -phase.logp + kinetic(&phase.p, inv_mass);
        h0 - h1
    };
    let mut a = accept_logp(eps);
    let going_up = a > (0.5f64).ln();
    for _ in 0..60 {
        if going_up {
            eps *= 2.0;
        } else {
            eps *= 0.5;
        }
        a = accept_logp(eps);
        if going_up != (a > (0.5f64).ln()) || !(1e-12..=1e6).contains(&eps) {
            break;
        }
    }
    if !going_up {
        // last eps already satisfied the criterion
        eps
    } else {
        eps * 0.5
    }
    .clamp(1e-10, 1e3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    /// Correlated 2-d Gaussian with known moments.
    struct Gauss2;

    impl LogDensity for Gauss2 {
        fn dim(&self) -> usize {
            2
        }
        fn log_density_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
            // mu = (1, -1), Sigma = [[1, 0.5], [0.5, 2.0]]
            // precision = 1/1.75 * [[2.0, -0.5], [-0.5, 1.0]]
            let (x, y) = (q[0] - 1.0, q[1] + 1.0);
            let det = 1.75f64;
            let (a, b, c) = (2.0 / det, -0.5 / det, 1.0 / det);
            grad[0] = -(a * x + b * y);
            grad[1] = -(b * x + c * y);
            -0.5 * (a * x * x + 2.0 * b * x * y + c * y * y)
        }
    }

    #[test]
    fn toy_target_moments() {
        let target = Gauss2;
        let mut rng = stream_rng(321, Stream::Chain(0));
        let inv_mass = vec![1.0, 1.0];
        let opts = NutsOptions::default();
        let mut grad = vec![0.0; 2];
        let mut q = vec![0.5, 0.5];
        let mut logp = target.log_density_grad(&q, &mut grad);

        let eps = 0.5;
        // short warmup to move into the typical set
        for _ in 0..200 {
            let t = transition(&target, &q, logp, &grad, eps, &inv_mass, &opts, &mut rng);
            q = t.q;
            logp = t.logp;
            grad = t.grad;
        }
        let n = 4000;
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let t = transition(&target, &q, logp, &grad, eps, &inv_mass, &opts, &mut rng);
            q = t.q;
            logp = t.logp;
            grad = t.grad;
            xs.push(q[0]);
            ys.push(q[1]);
        }
        let mx = crate::stats::mean(&xs);
        let my = crate::stats::mean(&ys);
        let vx = crate::stats::sample_variance(&xs);
        let vy = crate::stats::sample_variance(&ys);
        // 3 MC sd with a conservative ESS guess of n/10
        let tol = 3.0 / (n as f64 / 10.0).sqrt();
        assert!((mx - 1.0).abs() < tol * vx.sqrt() + 0.05, "mean x {mx}");
        assert!((my + 1.0).abs() < tol * vy.sqrt() + 0.05, "mean y {my}");
        assert!((vx - 1.0).abs() < 0.25, "var x {vx}");
        assert!((vy - 2.0).abs() < 0.5, "var y {vy}");
    }

    #[test]
    fn transition_is_deterministic_under_seed() {
        let target = Gauss2;
        let inv_mass = vec![1.0, 1.0];
        let opts = NutsOptions::default();
        let mut grad = vec![0.0; 2];
        let q = vec![0.3, -0.2];
        let logp = target.log_density_grad(&q, &mut grad);
        let mut rng1 = stream_rng(99, Stream::Chain(1));
        let mut rng2 = stream_rng(99, Stream::Chain(1));
        let t1 = transition(&target, &q, logp, &grad, 0.4, &inv_mass, &opts, &mut rng1);
        let t2 = transition(&target, &q, logp, &grad, 0.4, &inv_mass, &opts, &mut rng2);
        assert_eq!(t1.q, t2.q);
        assert_eq!(t1.depth, t2.depth);
    }

    #[test]
    fn reasonable_step_size_is_positive_and_moderate() {
        let target = Gauss2;
        let mut rng = stream_rng(7, Stream::Chain(2));
        let eps = find_reasonable_step_size(&target, &[0.0, 0.0], &[1.0, 1.0], &mut rng);
        assert!(eps > 1e-4 && eps < 10.0, "eps {eps}");
    }
}
