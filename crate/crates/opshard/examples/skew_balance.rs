//! How the three schedulers handle a skewed key population: cluster a
//! Zipf workload and compare hash partitioning, LPT, and the subset-sum
//! decomposition solver on the same load distribution.

use opshard::cli::dist_from_workload;
use opshard::cluster::Clusterer;
use opshard::engine::{gen_workload, WorkloadGen, WorkloadKind};
use opshard::sched;

fn main() -> opshard::Result<()> {
    let m = 8;
    let records = gen_workload(&WorkloadGen {
        kind: WorkloadKind::Zipf { s: 0.6, keys: 50_000 },
        pairs: 500_000,
        seed: 13,
    })?;
    let clusterer = Clusterer::default_hash(8 * m)?;
    let dist = dist_from_workload(&records, &clusterer);

    println!(
        "{} pairs over {} clusters, largest cluster {}",
        records.len(),
        dist.n(),
        dist.max()
    );
    println!("{:<6} {:>10} {:>10} {:>8}", "solver", "max_load", "ideal", "ratio");
    for (name, result) in [
        ("hash", sched::schedule_hash(&dist, m)?),
        ("lpt", sched::schedule_lpt(&dist, m)?),
        ("os4m", sched::schedule_os4m(&dist, m, 0.002)?),
    ] {
        println!(
            "{name:<6} {:>10} {:>10.1} {:>8.4}",
            result.max_load, result.ideal, result.ratio
        );
    }
    Ok(())
}
