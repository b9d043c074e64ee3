//! Scheduler quality against the exact optimum on small random instances:
//! for each instance, compare every solver's max-load ratio with the
//! brute-force oracle.

use opshard::model::KeyDist;
use opshard::sched;
use rand::{Rng, SeedableRng};

fn main() -> opshard::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let mut worst = [0.0f64; 3]; // hash, lpt, os4m vs oracle
    let instances = 100;
    for _ in 0..instances {
        let n = rng.gen_range(4..=14);
        let m = rng.gen_range(2..=4);
        let loads: Vec<u64> = (0..n).map(|_| rng.gen_range(1..=500)).collect();
        let dist = KeyDist::new(loads);

        let oracle = sched::brute_force_optimal(&dist, m)?;
        let solvers = [
            sched::schedule_hash(&dist, m)?,
            sched::schedule_lpt(&dist, m)?,
            sched::schedule_os4m(&dist, m, 0.002)?,
        ];
        for (w, s) in worst.iter_mut().zip(&solvers) {
            *w = w.max(s.max_load as f64 / oracle.max_load as f64);
        }
    }
    println!("worst max-load vs exact optimum over {instances} random instances:");
    for (name, w) in ["hash", "lpt", "os4m"].iter().zip(worst) {
        println!("  {name:<5} {w:.4}x");
    }
    Ok(())
}
