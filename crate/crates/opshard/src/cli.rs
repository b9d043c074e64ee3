//! Command-line front end: run jobs, benchmark schedulers, drive the
//! simulator, and summarize metrics files.
//!
//! Exit codes: 0 success, 1 job/runtime failure, 2 flag or configuration
//! errors. Seeds are mandatory wherever synthetic input is generated, so
//! every artifact is reproducible. `OPSHARD_LOG` controls log verbosity.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::cluster::Clusterer;
use crate::engine::{self, gen_workload, JobSpec, Record, WorkloadGen, WorkloadKind};
use crate::error::{Error, Result};
use crate::metrics::MetricsBundle;
use crate::model::{JobConfig, KeyDist, SchedulerKind};
use crate::sched;
use crate::sim::{self, OverlapMode, PipelineMode, SimConfig};

#[derive(Debug, Parser)]
#[command(name = "opshard", version, about = "Operation-level Reduce scheduling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a MapReduce job on a synthetic workload.
    Run(RunArgs),
    /// Compare schedulers over instance families.
    SchedBench(SchedBenchArgs),
    /// Simulate cluster contention and overlap modes.
    Sim(SimArgs),
    /// Summarize a metrics.csv file.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchedulerArg {
    Hash,
    Lpt,
    Os4m,
}

impl From<SchedulerArg> for SchedulerKind {
    fn from(v: SchedulerArg) -> SchedulerKind {
        match v {
            SchedulerArg::Hash => SchedulerKind::Hash,
            SchedulerArg::Lpt => SchedulerKind::Lpt,
            SchedulerArg::Os4m => SchedulerKind::Os4m,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WorkloadArg {
    Zipf,
    Uniform,
    Words,
}

#[derive(Debug, Args)]
pub struct WorkloadFlags {
    /// Input generator.
    #[arg(long, value_enum, default_value = "zipf")]
    pub workload: WorkloadArg,
    /// Zipf exponent.
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    /// Distinct keys.
    #[arg(long, default_value_t = 10_000)]
    pub keys: usize,
    /// Total records to generate.
    #[arg(long, default_value_t = 100_000)]
    pub pairs: usize,
    /// RNG seed (required: runs must be reproducible).
    #[arg(long)]
    pub seed: u64,
}

impl WorkloadFlags {
    fn generate(&self) -> Result<Vec<Record>> {
        let kind = match self.workload {
            WorkloadArg::Zipf => WorkloadKind::Zipf {
                s: self.s,
                keys: self.keys,
            },
            WorkloadArg::Uniform => WorkloadKind::Uniform { keys: self.keys },
            WorkloadArg::Words => WorkloadKind::WordCorpus { words_per_line: 8 },
        };
        gen_workload(&WorkloadGen {
            kind,
            pairs: self.pairs,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub workload: WorkloadFlags,
    /// Reduce slots.
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    /// Map slots.
    #[arg(long, default_value_t = 4)]
    pub map_slots: usize,
    /// Map waves.
    #[arg(long, default_value_t = 1)]
    pub waves: usize,
    /// Targeted operation-cluster count.
    #[arg(long)]
    pub n_target: Option<usize>,
    /// Scheduler precision parameter.
    #[arg(long, default_value_t = 0.002)]
    pub eta: f64,
    #[arg(long, value_enum, default_value = "os4m")]
    pub scheduler: SchedulerArg,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Also write wall-clock timing rows (non-deterministic) to metrics.csv.
    #[arg(long)]
    pub timings: bool,
}

pub fn cmd_run(args: &RunArgs) -> Result<()> {
    let input = args.workload.generate()?;
    let config = JobConfig {
        m: args.m,
        map_slots: args.map_slots,
        w: args.waves,
        n_target: args.n_target.unwrap_or(8 * args.m),
        eta: args.eta,
        scheduler: args.scheduler.into(),
    };
    let (map_fn, reduce_fn) = match args.workload.workload {
        WorkloadArg::Words => (engine::wordcount_map(), engine::wordcount_reduce()),
        _ => (engine::identity_map(), engine::count_reduce()),
    };
    let spec = JobSpec::new(map_fn, reduce_fn, input, config)?;
    let out = engine::run_job(&spec, &args.out_dir)?;
    out.metrics
        .write_csv(&args.out_dir.join("metrics.csv"), args.timings)?;
    std::fs::write(args.out_dir.join("trace.log"), out.trace.join("\n") + "\n")?;
    log::info!(
        "job done: ratio {:.4}, {} reduce outputs",
        out.metrics.ratio,
        out.output_files.len()
    );
    println!(
        "ratio {:.6} max_load {} outputs {}",
        out.metrics.ratio,
        out.metrics.max_load,
        out.output_files.len()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BenchFamily {
    /// Independent uniform loads per cluster.
    Random,
    /// Loads from clustering a Zipf-distributed key population.
    Zipf,
}

#[derive(Debug, Args)]
pub struct SchedBenchArgs {
    /// Instances per configuration.
    #[arg(long, default_value_t = 200)]
    pub instances: usize,
    #[arg(long, value_enum, default_value = "random")]
    pub family: BenchFamily,
    /// Cluster count bounds (random family draws n uniformly in range).
    #[arg(long, default_value_t = 4)]
    pub n_min: usize,
    #[arg(long, default_value_t = 18)]
    pub n_max: usize,
    /// Reduce-slot counts to sweep, comma separated.
    #[arg(long, default_value = "2,3,4", value_delimiter = ',')]
    pub m: Vec<usize>,
    /// Zipf family parameters.
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    #[arg(long, default_value_t = 10_000)]
    pub keys: usize,
    #[arg(long, default_value_t = 100_000)]
    pub pairs: usize,
    #[arg(long, default_value_t = 0.002)]
    pub eta: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Include solver wall times (non-deterministic column) in the CSV.
    #[arg(long)]
    pub timings: bool,
}

/// Cluster a synthetic workload's keys into a load distribution.
pub fn dist_from_workload(records: &[Record], clusterer: &Clusterer) -> KeyDist {
    let mut loads = vec![0u64; clusterer.n_target()];
    for (key, _) in records {
        loads[clusterer.cluster_of(key).index()] += 1;
    }
    KeyDist::new(loads)
}

fn bench_instances(args: &SchedBenchArgs) -> Result<Vec<(String, KeyDist)>> {
    use rand::{Rng, SeedableRng};
    if args.n_min < 1 || args.n_max < args.n_min {
        return Err(Error::InvalidInput(
            "need 1 <= n-min <= n-max for the instance family".into(),
        ));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
    let mut out = Vec::with_capacity(args.instances);
    for i in 0..args.instances {
        match args.family {
            BenchFamily::Random => {
                let n = rng.gen_range(args.n_min..=args.n_max);
                let loads = (0..n).map(|_| rng.gen_range(0..=1000u64)).collect();
                out.push((format!("random-{i:04}"), KeyDist::new(loads)));
            }
            BenchFamily::Zipf => {
                let records = gen_workload(&WorkloadGen {
                    kind: WorkloadKind::Zipf {
                        s: args.s,
                        keys: args.keys,
                    },
                    pairs: args.pairs,
                    seed: args.seed.wrapping_add(i as u64),
                })?;
                let clusterer = Clusterer::default_hash(args.n_max)?;
                out.push((format!("zipf-{i:04}"), dist_from_workload(&records, &clusterer)));
            }
        }
    }
    Ok(out)
}

pub fn cmd_sched_bench(args: &SchedBenchArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out_dir)?;
    let instances = bench_instances(args)?;
    let path = args.out_dir.join("sched_bench.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["instance", "solver", "n", "m", "max_load", "ratio", "solver_time_s"])?;
    for (name, dist) in &instances {
        for &m in &args.m {
            let mut rows: Vec<(String, sched::ScheduleResult)> = vec![
                ("hash".into(), sched::schedule_hash(dist, m)?),
                ("lpt".into(), sched::schedule_lpt(dist, m)?),
                ("os4m".into(), sched::schedule_os4m(dist, m, args.eta)?),
            ];
            if dist.n() <= 20 && m <= 5 {
                rows.push(("oracle".into(), sched::brute_force_optimal(dist, m)?));
            }
            for (solver, r) in rows {
                w.write_record([
                    name.clone(),
                    solver,
                    dist.n().to_string(),
                    m.to_string(),
                    r.max_load.to_string(),
                    r.ratio.to_string(),
                    if args.timings {
                        r.solver_time.as_secs_f64().to_string()
                    } else {
                        String::new()
                    },
                ])?;
            }
        }
    }
    w.flush()?;
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OverlapArg {
    Hadoop,
    Os4m,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PipelineArg {
    Sequential,
    Pipelined,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[command(flatten)]
    pub workload: WorkloadFlags,
    #[arg(long, default_value_t = 4)]
    pub nodes: usize,
    #[arg(long, default_value_t = 2)]
    pub map_slots_per_node: usize,
    #[arg(long, default_value_t = 2)]
    pub reduce_slots_per_node: usize,
    #[arg(long, default_value_t = 37.0)]
    pub net_bw: f64,
    #[arg(long, default_value_t = 203.0)]
    pub disk_read_bw: f64,
    #[arg(long, default_value_t = 121.0)]
    pub disk_write_bw: f64,
    /// Compute seconds per Map task.
    #[arg(long, default_value_t = 1.0)]
    pub map_work: f64,
    /// Shuffle bytes written per Map task, MB.
    #[arg(long, default_value_t = 128)]
    pub map_output_mb: u64,
    #[arg(long, default_value_t = 3)]
    pub waves: usize,
    #[arg(long, value_enum, default_value = "os4m")]
    pub overlap: OverlapArg,
    #[arg(long, value_enum, default_value = "pipelined")]
    pub pipeline: PipelineArg,
    /// Simulate both overlap modes side by side.
    #[arg(long)]
    pub compare: bool,
    /// Reduce slots (defaults to nodes * reduce_slots_per_node).
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n_target: Option<usize>,
    #[arg(long, default_value_t = 0.002)]
    pub eta: f64,
    #[arg(long, value_enum, default_value = "os4m")]
    pub scheduler: SchedulerArg,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn sim_config(args: &SimArgs) -> Result<SimConfig> {
    let m = args.m.unwrap_or(args.nodes * args.reduce_slots_per_node);
    if m == 0 {
        return Err(Error::InvalidInput("m must be at least 1".into()));
    }
    let n_target = args.n_target.unwrap_or(8 * m);
    let records = args.workload.generate()?;
    let clusterer = Clusterer::default_hash(n_target)?;
    let dist = dist_from_workload(&records, &clusterer);
    let schedule =
        sched::schedule_with(args.scheduler.into(), &dist, m, args.eta)?.schedule;
    let cfg = SimConfig {
        nodes: args.nodes,
        map_slots_per_node: args.map_slots_per_node,
        reduce_slots_per_node: args.reduce_slots_per_node,
        net_bw: args.net_bw,
        disk_read_bw: args.disk_read_bw,
        disk_write_bw: args.disk_write_bw,
        map_task_work: args.map_work,
        map_output_bytes: args.map_output_mb * 1024 * 1024,
        waves: args.waves,
        overlap_mode: match args.overlap {
            OverlapArg::Hadoop => OverlapMode::HadoopOverlap,
            OverlapArg::Os4m => OverlapMode::Os4mDeferred,
        },
        pipeline_mode: match args.pipeline {
            PipelineArg::Sequential => PipelineMode::Sequential,
            PipelineArg::Pipelined => PipelineMode::Pipelined,
        },
        dist,
        schedule,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_sim(args: &SimArgs) -> Result<()> {
    let cfg = sim_config(args)?;
    std::fs::create_dir_all(&args.out_dir)?;
    if args.compare {
        let cmp = sim::compare_modes(&cfg)?;
        for (label, trace) in [("hadoop", &cmp.hadoop), ("os4m", &cmp.deferred)] {
            sim::write_progress_csv(trace, &args.out_dir.join(format!("progress_{label}.csv")))?;
            sim::write_wave_csv(trace, &args.out_dir.join(format!("waves_{label}.csv")))?;
        }
        println!(
            "map done: hadoop {:.3}s, os4m {:.3}s",
            cmp.hadoop.map_done, cmp.deferred.map_done
        );
    } else {
        let trace = sim::simulate(&cfg)?;
        sim::write_progress_csv(&trace, &args.out_dir.join("progress.csv"))?;
        sim::write_wave_csv(&trace, &args.out_dir.join("waves.csv"))?;
        println!(
            "map done {:.3}s, job done {:.3}s, waves {:?}",
            trace.map_done, trace.total, trace.wave_durations
        );
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// metrics.csv produced by `run`.
    #[arg(long)]
    pub metrics: PathBuf,
}

pub fn cmd_report(args: &ReportArgs) -> Result<()> {
    let text = render_report(&args.metrics)?;
    print!("{text}");
    Ok(())
}

/// Human-readable summary of a metrics file.
pub fn render_report(path: &Path) -> Result<String> {
    use std::fmt::Write;
    let b = MetricsBundle::read_csv(path)?;
    let mut out = String::new();
    writeln!(out, "scheduler: {}", b.scheduler).unwrap();
    writeln!(out, "slots: {}", b.slot_loads.len()).unwrap();
    writeln!(
        out,
        "load: max {} ideal {:.2} ratio {:.4}",
        b.max_load, b.ideal, b.ratio
    )
    .unwrap();
    let distinct: HashSet<u64> = b.slot_loads.iter().copied().collect();
    writeln!(out, "distinct slot loads: {}", distinct.len()).unwrap();
    writeln!(
        out,
        "protocol bytes: collect {}/{} broadcast {}/{} (measured/bound)",
        b.collect_bytes, b.collect_bound, b.broadcast_bytes, b.broadcast_bound
    )
    .unwrap();
    if !b.reduce_durations.is_empty() {
        writeln!(
            out,
            "reduce durations: mean {:.4}s spread {:.4}",
            crate::metrics::mean(&b.reduce_durations),
            crate::metrics::stddev_over_mean(&b.reduce_durations)
        )
        .unwrap();
    }
    Ok(out)
}

/// Dispatch a parsed command line; maps errors to process exit codes.
pub fn execute(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::SchedBench(args) => cmd_sched_bench(args),
        Command::Sim(args) => cmd_sim(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                // Configuration problems are usage errors.
                Error::InvalidInput(_) | Error::DimensionMismatch(_) => 2,
                _ => 1,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(line: &str) -> Cli {
        Cli::try_parse_from(line.split_whitespace()).unwrap()
    }

    #[test]
    fn run_produces_metrics_and_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cli = parse(&format!(
            "opshard run --workload zipf --s 1.0 --keys 500 --pairs 2000 --scheduler os4m \
             --m 3 --n-target 24 --eta 0.002 --seed 1 --out-dir {}",
            dir.path().display()
        ));
        assert_eq!(execute(&cli), 0);
        let metrics = MetricsBundle::read_csv(&dir.path().join("metrics.csv")).unwrap();
        assert!(metrics.ratio >= 1.0 - 1e-9);
        assert_eq!(metrics.slot_loads.len(), 3);
        assert!(dir.path().join("trace.log").exists());
    }

    #[test]
    fn schedulers_agree_on_outputs_but_not_balance() {
        let base = |dir: &Path, sched: &str| {
            format!(
                "opshard run --workload zipf --s 1.2 --keys 300 --pairs 3000 --scheduler {sched} \
                 --m 3 --n-target 12 --seed 9 --out-dir {}",
                dir.display()
            )
        };
        let hash_dir = tempfile::tempdir().unwrap();
        let os4m_dir = tempfile::tempdir().unwrap();
        assert_eq!(execute(&parse(&base(hash_dir.path(), "hash"))), 0);
        assert_eq!(execute(&parse(&base(os4m_dir.path(), "os4m"))), 0);
        // Same per-cluster reduce outputs except for the slot id in the
        // header (bytes 4..8), which legitimately differs.
        let read_outputs = |dir: &Path| {
            let mut files: Vec<Vec<u8>> = Vec::new();
            for entry in std::fs::read_dir(dir.join("reduce")).unwrap().flatten() {
                let mut bytes = std::fs::read(entry.path()).unwrap();
                bytes[4..8].fill(0);
                files.push(bytes);
            }
            files.sort();
            files
        };
        assert_eq!(read_outputs(hash_dir.path()), read_outputs(os4m_dir.path()));
        let ha = MetricsBundle::read_csv(&hash_dir.path().join("metrics.csv")).unwrap();
        let oa = MetricsBundle::read_csv(&os4m_dir.path().join("metrics.csv")).unwrap();
        assert!(oa.ratio <= ha.ratio);
    }

    #[test]
    fn missing_seed_is_a_parse_error() {
        let result = Cli::try_parse_from(
            "opshard run --workload zipf --out-dir /tmp/x".split_whitespace(),
        );
        assert!(result.is_err());
    }

    #[test]
    fn sched_bench_has_oracle_rows_for_small_instances() {
        let dir = tempfile::tempdir().unwrap();
        let cli = parse(&format!(
            "opshard sched-bench --instances 5 --n-min 4 --n-max 10 --m 2,3 --seed 3 \
             --out-dir {}",
            dir.path().display()
        ));
        assert_eq!(execute(&cli), 0);
        let text = std::fs::read_to_string(dir.path().join("sched_bench.csv")).unwrap();
        let oracle_rows = text.lines().filter(|l| l.contains(",oracle,")).count();
        assert_eq!(oracle_rows, 10);
        let os4m_rows = text.lines().filter(|l| l.contains(",os4m,")).count();
        assert_eq!(os4m_rows, 10);
    }

    #[test]
    fn sim_compare_writes_both_modes() {
        let dir = tempfile::tempdir().unwrap();
        let cli = parse(&format!(
            "opshard sim --compare --waves 3 --nodes 2 --keys 200 --pairs 1000 --seed 5 \
             --out-dir {}",
            dir.path().display()
        ));
        assert_eq!(execute(&cli), 0);
        for f in [
            "progress_hadoop.csv",
            "waves_hadoop.csv",
            "progress_os4m.csv",
            "waves_os4m.csv",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        // Hadoop-style overlap slows the later waves.
        let waves = std::fs::read_to_string(dir.path().join("waves_hadoop.csv")).unwrap();
        let durations: Vec<f64> = waves
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert!(durations[1] > durations[0]);
    }

    #[test]
    fn zero_net_bw_exits_2() {
        let dir = tempfile::tempdir().unwrap();
        let cli = parse(&format!(
            "opshard sim --net-bw 0 --seed 1 --keys 100 --pairs 500 --out-dir {}",
            dir.path().display()
        ));
        assert_eq!(execute(&cli), 2);
    }

    #[test]
    fn report_summarizes_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let run = parse(&format!(
            "opshard run --workload uniform --keys 100 --pairs 1000 --m 2 --seed 2 \
             --out-dir {}",
            dir.path().display()
        ));
        assert_eq!(execute(&run), 0);
        let text = render_report(&dir.path().join("metrics.csv")).unwrap();
        assert!(text.contains("ratio"));
        assert!(text.contains("collect"));
    }

    #[test]
    fn csv_artifacts_are_deterministic() {
        let once = || {
            let dir = tempfile::tempdir().unwrap();
            let cli = parse(&format!(
                "opshard run --workload zipf --keys 300 --pairs 2000 --m 3 --seed 4 --out-dir {}",
                dir.path().display()
            ));
            assert_eq!(execute(&cli), 0);
            std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap()
        };
        assert_eq!(once(), once());
    }
}
