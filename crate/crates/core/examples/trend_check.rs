//! Quick look at desk-scale operating characteristics on a few replications.
//!
//! Run with: cargo run --release --example trend_check -p doseshrink-core -- [reps]

use doseshrink_core::mcmc::SamplerConfig;
use doseshrink_core::simulation::{
    method_prior, run_study, ScenarioKind, ScenarioSpec, StudyConfig,
};

fn main() {
    let reps: usize =
        std::env::args().nth(1).and_then(|v| v.parse().ok()).unwrap_or(8);
    let eta = (0.030, 0.006, 0.026);
    let methods: Vec<(String, _)> = ["rhs", "rhs_dep"]
        .iter()
        .map(|m| (m.to_string(), method_prior(m, 0.2, 100.0, eta, eta).unwrap()))
        .collect();
    let scenarios = vec![
        ScenarioSpec::new(ScenarioKind::Null, 500, 10).unwrap(),
        ScenarioSpec::new(ScenarioKind::OnlyPred, 500, 10).unwrap(),
        ScenarioSpec::new(ScenarioKind::ProgAndPred, 500, 10).unwrap(),
    ];
    let cfg = StudyConfig {
        reps,
        base_seed: 20240501,
        mcmc: SamplerConfig {
            chains: 2,
            warmup: 400,
            draws: 500,
            ..Default::default()
        },
        ..Default::default()
    };
    let t0 = std::time::Instant::now();
    let report = run_study(&scenarios, &methods, &cfg).unwrap();
    println!("total {:.1}s for {} fits", t0.elapsed().as_secs_f64(), reps * 6);
    for a in &report.aggregates {
        println!(
            "{:14} {:8} fail {} | emax x1..x4 {:.2?} | ed50 x1..x4 {:.2?} | pred x1..x4 {:.2?} | rmse {:.4} | spec {:?} sens {:?} |S| {:?} |Shat| {:?}",
            a.scenario,
            a.method,
            a.failures,
            &a.sel_freq_emax[..4],
            &a.sel_freq_ed50[..4],
            &a.sel_freq_pred[..4],
            a.mean_rmse.unwrap_or(f64::NAN),
            a.mean_spec,
            a.mean_sens,
            a.mean_size_true,
            a.mean_size_est,
        );
    }
}
