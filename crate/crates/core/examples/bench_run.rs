//! Times one replicate from the all-type-0 start to `3 a_N` with
//! `mu = 1e-4`, `s = 0.05`.
//!
//!     cargo run --release --example bench_run -- [N] [faithful|effective]

use fitwave::{engine::NoHook, run, theory, EngineKind, ModelParams, RunSchedule};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: f64 = args.get(1).map(|a| a.parse().unwrap()).unwrap_or(1e5);
    let engine: EngineKind = args.get(2).map(|a| a.parse().unwrap()).unwrap_or_default();
    let p = ModelParams::new(n as u64, 1e-4, 0.05).unwrap();
    let sc = theory::scales(&p).unwrap();
    let sched = RunSchedule::uniform(3.0 * sc.a_n, 301).unwrap().with_threshold_watch(true);
    let t = Instant::now();
    let traj = run(&p, &sched, engine, 1, &mut NoHook).unwrap();
    let el = t.elapsed().as_secs_f64();
    println!("{engine} N={n}: {:?} in {el:.2}s ({:.1} Mev/s)", traj.counters, traj.counters.total as f64 / el / 1e6);
}
