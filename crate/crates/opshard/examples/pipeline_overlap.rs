//! The copy -> sort -> run Reduce pipeline: items ordered by increasing
//! load so the first sort starts as early as possible, with stage overlap
//! cutting the slot makespan versus running the stages back to back.

use opshard::sim::{pipeline_makespan, PipelineMode};

fn make_items(descending: bool) -> Vec<[f64; 3]> {
    let mut items: Vec<[f64; 3]> = (1..=5)
        .map(|i| {
            let t = i as f64;
            [t * 0.5, t, t * 0.3]
        })
        .collect();
    if descending {
        items.reverse();
    }
    items
}

fn main() {
    // Three equal items, one time unit per stage: the textbook case.
    let unit = [[1.0, 1.0, 1.0]; 3];
    println!(
        "3 unit items: pipelined {} vs sequential {}",
        pipeline_makespan(&unit, PipelineMode::Pipelined),
        pipeline_makespan(&unit, PipelineMode::Sequential)
    );

    // Increasing loads (the order the planner picks) versus decreasing.
    let asc = make_items(false);
    let desc = make_items(true);
    println!(
        "5 growing items, ascending order : makespan {:.2}, first sort at {:.2}",
        pipeline_makespan(&asc, PipelineMode::Pipelined),
        asc[0][0]
    );
    println!(
        "5 growing items, descending order: makespan {:.2}, first sort at {:.2}",
        pipeline_makespan(&desc, PipelineMode::Pipelined),
        desc[0][0]
    );
}
