//! Monte Carlo check of the aggregation scaling factor on CSBM graphs:
//! mean aggregation, class-weighted aggregation, five classes, and the sign
//! boundary at w+/w- = q/p.
//!
//!     cargo run --release --example theorem_sweep -- [trials]

use std::time::Instant;

use csna::csbm::{monte_carlo, sign_boundary_sweep, CsbmParams};

fn main() -> csna::Result<()> {
    let trials: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let binary = CsbmParams::default();
    let five = CsbmParams {
        classes: 5,
        n: 4000,
        ..binary
    };

    println!("{:<28} {:>10} {:>10} {:>9} {:>8}", "setting", "predicted", "empirical", "se", "secs");
    for (label, params, w_plus, w_minus) in [
        ("mean, C=2", binary, 1.0, 1.0),
        ("w+=1 w-=0.1, C=2", binary, 1.0, 0.1),
        ("mean, C=5", five, 1.0, 1.0),
    ] {
        let t = Instant::now();
        let r = monte_carlo(&params, w_plus, w_minus, trials, 7, jobs)?;
        println!(
            "{label:<28} {:>10.5} {:>10.5} {:>9.5} {:>8.2}",
            r.predicted,
            r.empirical,
            r.standard_error.unwrap_or(0.0),
            t.elapsed().as_secs_f64()
        );
    }

    let threshold = binary.q / binary.p;
    let ratios: Vec<f64> = [0.5, 1.0, 2.0, 4.0, 8.0].iter().map(|m| m * threshold).collect();
    let t = Instant::now();
    let sweep = sign_boundary_sweep(&binary, &ratios, trials, 7, jobs)?;
    println!("\nsign boundary, q/p = {threshold} ({:.2}s)", t.elapsed().as_secs_f64());
    println!("{:>8} {:>10} {:>10} {:>5}", "w+/w-", "predicted", "empirical", "ok");
    for row in &sweep.rows {
        println!(
            "{:>8.3} {:>10.5} {:>10.5} {:>5}",
            row.ratio, row.report.predicted, row.report.empirical, row.consistent
        );
    }
    println!("sign changes between {:?}", sweep.sign_changes);
    Ok(())
}
