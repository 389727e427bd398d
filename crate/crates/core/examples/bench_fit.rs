//! Rough timing for one desk-scale fit (n=500, k=10, regularized horseshoe).
//!
//! Run with: cargo run --release --example bench_fit -p doseshrink-core

use doseshrink_core::mcmc::{run_chains, SamplerConfig};
use doseshrink_core::priors::PriorSpec;
use doseshrink_core::rng::{stream_rng, Stream};
use doseshrink_core::simulation::{generate_trial, ScenarioKind, ScenarioSpec};

fn main() {
    let spec = ScenarioSpec::new(ScenarioKind::ProgAndPred, 500, 10).unwrap();
    let mut rng = stream_rng(7, Stream::Replication(0));
    let trial = generate_trial(&spec, &mut rng).unwrap();

    let prior = PriorSpec::reg_horseshoe((0.030, 0.006, 0.026), trial.data.d_max())
        .with_dependent(true);
    let cfg = SamplerConfig { chains: 2, warmup: 400, draws: 500, seed: 11, ..Default::default() };
    let t0 = std::time::Instant::now();
    let samples = run_chains(&trial.data, &prior, &cfg).unwrap();
    let dt = t0.elapsed();
    let diag = samples.diagnostics.as_ref().unwrap();
    let max_rhat = diag.rhat.iter().cloned().fold(f64::NAN, f64::max);
    println!(
        "fit: {:.1}s, divergences {}/{}, accept {:.3}, max rhat {:.3}, step sizes {:?}",
        dt.as_secs_f64(),
        diag.divergences,
        samples.n_rows(),
        diag.accept_mean,
        max_rhat,
        diag.step_sizes
    );
    for name in ["alpha_e0", "alpha_emax", "ed50", "h", "sigma", "gamma_x2", "delta_x2"] {
        let col = samples.column_by_name(name).unwrap();
        let idx = samples.idx(name).unwrap();
        println!(
            "  {name:10} mean {:+.4} rhat {:.3} ess {:.0}",
            doseshrink_core::stats::mean(&col),
            diag.rhat[idx],
            diag.ess_bulk[idx]
        );
    }
}
