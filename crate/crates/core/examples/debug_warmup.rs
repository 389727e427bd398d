//! Trace the warmup of one failing chain.

use std::cell::RefCell;

use doseshrink_core::mcmc::adapt::{DualAveraging, WarmupSchedule, Welford};
use doseshrink_core::mcmc::nuts::{self, LogDensity, NutsOptions};
use doseshrink_core::mcmc::initialize;
use doseshrink_core::posterior::{EvalScratch, IndicatorState, PosteriorModel};
use doseshrink_core::rng::{stream_rng, Stream};
use doseshrink_core::simulation::{generate_trial, method_prior, ScenarioKind, ScenarioSpec};

struct Target<'m, 'a> {
    model: &'m PosteriorModel<'a>,
    ind: &'m IndicatorState,
    scratch: &'m RefCell<EvalScratch>,
}

impl LogDensity for Target<'_, '_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }
    fn log_density_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        self.model
            .log_density_grad(q, self.ind, &[1.0; 3], grad, &mut self.scratch.borrow_mut())
    }
}

fn fit_seed(base: u64, scenario_idx: usize, method_idx: usize, rep: usize) -> u64 {
    let mut h = base ^ 0x9e37_79b9_7f4a_7c15;
    for v in [scenario_idx as u64, method_idx as u64, rep as u64] {
        h ^= v.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    }
    h
}

fn main() {
    let rep = 16usize;
    let eta = (0.030, 0.006, 0.026);
    let prior = method_prior("rhs", 0.2, 100.0, eta, eta).unwrap();
    let spec = ScenarioSpec::new(ScenarioKind::Null, 500, 10).unwrap();
    let mut rng = stream_rng(20240501, Stream::Replication(rep as u64));
    let trial = generate_trial(&spec, &mut rng).unwrap();
    let seed = fit_seed(20240501, 0, 0, rep);

    for chain in 0..2u64 {
        let mut rng = stream_rng(seed, Stream::Chain(chain));
        let model = PosteriorModel::new(&trial.data, &prior).unwrap();
        let params = initialize(&trial.data, &prior, &mut rng).unwrap();
        let (mut u, ind, _slab) = model.state_from_params(&params).unwrap();
        let scratch = RefCell::new(model.scratch());
        let target = Target { model: &model, ind: &ind, scratch: &scratch };
        let mut grad = vec![0.0; model.dim()];
        let lp0 = target.log_density_grad(&u, &mut grad);
        let gmax = grad.iter().cloned().fold(0.0f64, |m, g| m.max(g.abs()));
        println!("chain {chain}: init lp {lp0:.2}, max |grad| {gmax:.3e}");

        let mut inv_mass = vec![1.0; model.dim()];
        let eps0 = nuts::find_reasonable_step_size(&target, &u, &inv_mass, &mut rng);
        println!("chain {chain}: eps0 = {eps0:.3e}");
        let mut da = DualAveraging::new(eps0, 0.95);
        let schedule = WarmupSchedule::new(400);
        let mut welford = Welford::new(model.dim());
        let opts = NutsOptions::default();
        let mut n_div = 0;
        for it in 0..400 {
            let logp = target.log_density_grad(&u, &mut grad);
            let t = nuts::transition(
                &target, &u, logp, &grad, da.current(), &inv_mass, &opts, &mut rng,
            );
            if it < 30 || it % 50 == 0 || (it > 90 && it < 110) {
                println!(
                    "  it {it:3} eps {:.3e} depth {} accept {:.3} div {} logp {:.1}",
                    da.current(),
                    t.depth,
                    t.accept_stat,
                    t.divergent,
                    t.logp
                );
            }
            n_div += t.divergent as usize;
            u = t.q;
            da.update(t.accept_stat);
            if schedule.in_slow_window(it) {
                welford.add(&u);
            }
            if schedule.window_ends_at(it) && welford.count() >= 10 {
                inv_mass = welford.regularized_variance();
                welford.reset();
                let e = nuts::find_reasonable_step_size(&target, &u, &inv_mass, &mut rng);
                println!("  window end at {it}: new eps {e:.3e}");
                da.restart(e);
            }
        }
        println!("chain {chain}: total divergent {n_div}/400");
    }
}
