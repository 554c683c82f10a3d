//! Full particle-count sweep: every method on every condition, with results
//! written to a directory and the per-(method, N) summary printed.
//!
//! cargo run --release --example sweep -- [config.toml] [out_dir]

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use tgd::harness::config::RunConfig;
use tgd::harness::output::{aggregate, emit_all};
use tgd::harness::run::Experiment;

fn main() -> tgd::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = match args.next() {
        Some(p) => RunConfig::load(&PathBuf::from(p))?,
        None => RunConfig::default(),
    };
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| config.output.dir.clone());
    let exp = Experiment::new(config)?;
    let total = exp.config().cell_count();
    let done = AtomicUsize::new(0);
    let start = Instant::now();
    let sweep = exp.sweep_with(|rec| {
        let k = done.fetch_add(1, Ordering::Relaxed) + 1;
        eprintln!(
            "[{k}/{total}] cond {} {} N={} swd {:.4} ({:.0} ms)",
            rec.condition_id, rec.method, rec.n_particles, rec.swd, rec.wall_ms
        );
    })?;
    emit_all(&out, &exp, &sweep)?;
    let floor = sweep.floors.iter().map(|f| f.floor_swd).sum::<f64>() / sweep.floors.len().max(1) as f64;
    println!("{:<12} {:>5} {:>10} {:>10}", "method", "N", "mean_swd", "se");
    for row in aggregate(&sweep.records) {
        println!("{:<12} {:>5} {:>10.5} {:>10.5}", row.method, row.n_particles, row.mean_swd, row.se_swd);
    }
    println!("mean two-oracle floor {floor:.5}; {:.1} s; results in {}", start.elapsed().as_secs_f64(), out.display());
    Ok(())
}
