//! Simulated Map/Reduce I/O contention: the same job under Hadoop-style
//! eager shuffle copying versus deferred copying. With eager copying the
//! later Map waves fight the shuffle for disk bandwidth and slow down.

use opshard::cli::dist_from_workload;
use opshard::cluster::Clusterer;
use opshard::engine::{gen_workload, WorkloadGen, WorkloadKind};
use opshard::sched;
use opshard::sim::{compare_modes, SimConfig};

fn main() -> opshard::Result<()> {
    let m = 8;
    let records = gen_workload(&WorkloadGen {
        kind: WorkloadKind::Zipf { s: 0.8, keys: 20_000 },
        pairs: 200_000,
        seed: 21,
    })?;
    let clusterer = Clusterer::default_hash(8 * m)?;
    let dist = dist_from_workload(&records, &clusterer);
    let schedule = sched::schedule_os4m(&dist, m, 0.002)?.schedule;

    let mut cfg = SimConfig::default_cluster(dist, schedule);
    cfg.map_output_bytes = 256 * 1024 * 1024;
    let cmp = compare_modes(&cfg)?;

    println!("wave durations (seconds):");
    println!("  eager copy (hadoop): {:?}", rounded(&cmp.hadoop.wave_durations));
    println!("  deferred copy      : {:?}", rounded(&cmp.deferred.wave_durations));
    println!(
        "map phase: eager {:.2}s vs deferred {:.2}s",
        cmp.hadoop.map_done, cmp.deferred.map_done
    );
    println!(
        "whole job: eager {:.2}s vs deferred {:.2}s",
        cmp.hadoop.total, cmp.deferred.total
    );
    Ok(())
}

fn rounded(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|x| (x * 100.0).round() / 100.0).collect()
}
