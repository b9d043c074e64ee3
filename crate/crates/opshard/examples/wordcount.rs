//! End-to-end word count: generate a pseudo-text corpus, run the full
//! Map -> stats -> schedule -> Reduce pipeline, and print the top words.

use opshard::engine::{
    gen_workload, run_job, wordcount_map, wordcount_reduce, JobSpec, WorkloadGen, WorkloadKind,
};
use opshard::model::{JobConfig, SchedulerKind};

fn main() -> opshard::Result<()> {
    let input = gen_workload(&WorkloadGen {
        kind: WorkloadKind::WordCorpus { words_per_line: 8 },
        pairs: 20_000,
        seed: 7,
    })?;

    let config = JobConfig {
        m: 4,
        map_slots: 4,
        w: 2,
        n_target: 32,
        eta: 0.002,
        scheduler: SchedulerKind::Os4m,
    };
    let spec = JobSpec::new(wordcount_map(), wordcount_reduce(), input, config)?;

    let dir = tempfile::tempdir().expect("tempdir");
    let out = run_job(&spec, dir.path())?;

    let mut counts: Vec<(String, u64)> = out
        .outputs
        .iter()
        .flat_map(|o| o.pairs.iter())
        .map(|(k, v)| {
            (
                String::from_utf8_lossy(k).into_owned(),
                String::from_utf8_lossy(v).parse().unwrap_or(0),
            )
        })
        .collect();
    counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    println!("top 10 words of {} distinct:", counts.len());
    for (word, count) in counts.iter().take(10) {
        println!("  {word:<8} {count}");
    }
    println!(
        "balance: max load {} vs ideal {:.1} (ratio {:.4})",
        out.metrics.max_load, out.metrics.ideal, out.metrics.ratio
    );
    println!(
        "protocol: {} collect bytes (bound {}), {} broadcast bytes (bound {})",
        out.metrics.collect_bytes,
        out.metrics.collect_bound,
        out.metrics.broadcast_bytes,
        out.metrics.broadcast_bound
    );
    Ok(())
}
