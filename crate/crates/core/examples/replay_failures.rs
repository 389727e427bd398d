//! Replay the desk-scale study cells one by one and print any fit errors.

use doseshrink_core::mcmc::{run_chains, SamplerConfig};
use doseshrink_core::rng::{stream_rng, Stream};
use doseshrink_core::simulation::{generate_trial, method_prior, ScenarioKind, ScenarioSpec};

fn fit_seed(base: u64, scenario_idx: usize, method_idx: usize, rep: usize) -> u64 {
    let mut h = base ^ 0x9e37_79b9_7f4a_7c15;
    for v in [scenario_idx as u64, method_idx as u64, rep as u64] {
        h ^= v.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    }
    h
}

fn main() {
    let eta = (0.030, 0.006, 0.026);
    let prior = method_prior("rhs", 0.2, 100.0, eta, eta).unwrap();
    let spec = ScenarioSpec::new(ScenarioKind::Null, 500, 10).unwrap();
    let reps = 50;
    for rep in 0..reps {
        let mut rng = stream_rng(20240501, Stream::Replication(rep as u64));
        let trial = generate_trial(&spec, &mut rng).unwrap();
        let cfg = SamplerConfig {
            chains: 2,
            warmup: 400,
            draws: 500,
            seed: fit_seed(20240501, 0, 0, rep),
            ..Default::default()
        };
        match run_chains(&trial.data, &prior, &cfg) {
            Ok(s) => {
                let d = s.diagnostics.as_ref().unwrap().divergences;
                if d > 20 {
                    println!("rep {rep}: ok but {d} divergences");
                }
            }
            Err(e) => println!("rep {rep}: ERROR {e}"),
        }
    }
    println!("done");
}
