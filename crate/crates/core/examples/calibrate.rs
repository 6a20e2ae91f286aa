//! Sweeps the simulated player's drift and reversion rates (and the skill
//! offset) and reports where the fixed-blue arm lands.
//!
//! cargo run --release -p dsa-core --example calibrate

use dsa_core::evaluation::run_experiment;
use dsa_core::usersim::UserModelParams;
use dsa_core::SessionConfig;

const PAIRS: u64 = 50;

fn main() {
    println!(
        "{:>11} {:>14} {:>11} {:>9} {:>9} {:>9} {:>8}",
        "red_drift", "blue_reversion", "skill_off", "mean_off", "mean_on", "improved", "in_band"
    );
    for skill_offset in [0.15, 0.35, 0.45] {
        for red_drift in [0.04, 0.06, 0.08, 0.10, 0.12] {
            for blue_reversion in [0.2, 0.3, 0.4] {
                let cfg = SessionConfig {
                    user_model: UserModelParams {
                        red_drift,
                        blue_reversion,
                        skill_offset,
                        ..UserModelParams::default()
                    },
                    ..SessionConfig::default()
                };
                let rep = run_experiment(PAIRS, &cfg, 0).expect("experiment runs");
                let in_band = (75.0..=90.0).contains(&rep.mean_off);
                println!(
                    "{red_drift:>11.2} {blue_reversion:>14.2} {skill_offset:>11.2} {:>9.3} {:>9.3} {:>9.3} {:>8}",
                    rep.mean_off, rep.mean_on, rep.improved_fraction, in_band
                );
            }
        }
    }
}
