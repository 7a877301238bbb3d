//! Synthetic city through the full in-memory pipeline.
//!
//! Usage: `synthetic_benchmark [rows] [noise] [trees]`

use std::time::Instant;

use landuse_core::experiment::{run_experiment, ExperimentParams};
use landuse_core::ingest::bin_events;
use landuse_core::rforest::{ClassWeights, ForestParams};
use landuse_core::synth::{generate_events, generate_layout, SynthConfig};

fn main() -> landuse_core::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let t = Instant::now();
    let n = arg(0, 100.0) as usize;
    let cfg = SynthConfig { n_rows: n, n_cols: n, noise: arg(1, 0.0), ..SynthConfig::default() };
    let zg = generate_layout(&cfg)?;
    let cube = bin_events(generate_events(&zg, &cfg)?, &zg.spec, &cfg.window()?)?;
    println!("generated {} events in {:.1?}", cube.stats.binned, t.elapsed());
    let params = ExperimentParams {
        forest: ForestParams { n_trees: arg(2, 500.0) as usize, ..ForestParams::default() },
        ..ExperimentParams::default()
    };
    let out = run_experiment(&cube, &zg, &params)?;
    println!("{}", out.raw_report.to_text());
    println!("tuned non-residential macro recall {:.3}", out.raw_report.non_residential_macro_recall());
    let uniform = ClassWeights::uniform(out.dataset.classes.len());
    println!("uniform accuracy {:.3}", out.cv.accuracy(&uniform));
    let obj = landuse_core::rforest::Objective::NonResidentialMacroRecall;
    println!("uniform nonres recall {:.3}", obj.score(&out.cv.classes, &out.cv.truth, &out.cv.predict(&uniform)));
    println!("smoothed accuracy {:.3}", out.smoothed_report.total_accuracy);
    println!("total {:.1?}", t.elapsed());
    Ok(())
}
