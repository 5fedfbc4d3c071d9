//! Full pipeline on the toy obstacle configuration: simulator runs at the
//! collocation grid, surrogate training, Monte Carlo reference and the
//! metrics table. A second pass reads every simulator result from the cache.

use std::time::Instant;

use flowstab::config::ExperimentConfig;
use flowstab::experiment::{self, open_cache};
use flowstab::simulator::Simulator;

fn main() -> flowstab::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/obstacle-toy.toml");
    let cfg = ExperimentConfig::load(path.as_ref())?;
    let cache_path = std::env::temp_dir().join("flowstab-example-cache.jsonl");
    let _ = std::fs::remove_file(&cache_path);
    let cache = open_cache(Some(&cache_path))?;

    for cov in cfg.viscosity.cov.clone() {
        let sim = Simulator::new(cfg.simulator_spec(cov))?;
        let trained = experiment::train(&cfg, &sim, &cache, &cfg.surrogates.kinds, cfg.surrogates.stride)?;
        let models: Vec<_> = trained.models.iter().map(|(m, _)| m.clone()).collect();
        let a = experiment::assess(&cfg, &sim, &cache, &models)?;
        println!("CoV {cov}: {} grid nodes, {} Monte Carlo samples", trained.grid.len(), a.report.n_mc);
        for line in trained.timings.lines().iter().chain(&a.timings.lines()) {
            println!("  {line}");
        }
        print!("{}", a.report.table_csv());

        let t = Instant::now();
        let again = experiment::assess(&cfg, &sim, &cache, &models)?;
        println!(
            "  cached rerun: {:.3} s, identical report: {}\n",
            t.elapsed().as_secs_f64(),
            again.report == a.report
        );
    }
    println!("{} cache entries in {}", cache.len(), cache_path.display());
    Ok(())
}
