use micontrast::critics::{CriticConfig, CriticKind};
use micontrast::experiments::{run_staircase, ObjectiveRun, StaircaseConfig};
use micontrast::objectives::{alpha_min, EstimatorKind, ObjectiveSpec};

fn main() {
    let ln_m = 64.0_f64.ln();
    println!("need: cpc in [{:.3}, {:.3}]; ml > {:.3} and <= 6+3se; both >= 1.5 at MI=2", ln_m - 0.5, ln_m + 0.02, ln_m);
    for lr in [2e-3, 3e-3] {
        for (label, objective) in [
            ("cpc_a1", ObjectiveRun::Fixed(ObjectiveSpec { kind: EstimatorKind::Cpc, alpha: 1.0 })),
            ("ml_amin", ObjectiveRun::Fixed(ObjectiveSpec { kind: EstimatorKind::MlCpc, alpha: alpha_min(64, 64).unwrap() })),
        ] {
            let cfg = StaircaseConfig {
                d: 20, n: 64, m: 64,
                levels: vec![2.0, 4.0, 6.0],
                iters_per_level: 1000,
                critic: CriticKind::Joint,
                critic_config: CriticConfig::default(),
                objective,
                lr,
                seed: 7,
            };
            let trace = run_staircase(&cfg).unwrap();
            let mut line = format!("lr={lr}: {label}:");
            for (idx, mi) in cfg.levels.iter().enumerate() {
                let end = (idx + 1) * cfg.iters_per_level;
                let (mean, se) = trace.trailing_stats(end, 200);
                line += &format!("  MI={mi}: {mean:.4}±{se:.4}");
            }
            println!("{line}");
        }
    }
}
