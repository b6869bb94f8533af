//! Prints the median final stay-in probability of the known-parameter
//! optimum over a grid of opt-out penalties, and the smallest penalty that
//! keeps it at or above one half.
//!
//! cargo run --release --example calibrate_rho [seed]

use dr_optout::harness::{final_stay_medians, gen_customers, CampaignConfig};

fn main() -> dr_optout::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let cc = CampaignConfig {
        seed,
        ..CampaignConfig::default()
    };
    let population = gen_customers(seed, &cc.population)?;
    let grid: Vec<f64> = (0..=40).map(|i| 0.5 * i as f64).collect();
    let events: Vec<u64> = (1..=10).collect();
    let medians = final_stay_medians(&cc, &population, &events, &grid)?;
    for (rho, m) in &medians {
        println!("rho {rho:>5.1}  median final stay {m:.4}");
    }
    match medians.iter().find(|(_, m)| *m >= 0.5) {
        Some((rho, _)) => println!("calibrated rho = {rho}"),
        None => println!("no penalty on the grid reaches one half"),
    }
    Ok(())
}
