//! Compare label-assignment dynamics with and without release-fetch
//! supervision on a fixed synthetic corpus: per-epoch detect share of the
//! labels and per-epoch stage-misalignment fraction.
//!
//! Run with `cargo run --release --example strategy_dynamics`.

use motlab::analytics::{assignment_stats, misalignment_stats};
use motlab::engine::{run_training, TrainConfig};
use motlab::world::{generate_scenario, render_all, FrameSeq, ScenarioConfig};

fn corpus(n: usize) -> Vec<FrameSeq> {
    let cfg = ScenarioConfig {
        num_targets: 4,
        num_frames: 64,
        speed_range: (0.0004, 0.0012),
        size_range: (0.2, 0.3),
        birth_prob: 0.25,
        death_prob: 0.0,
        motion_noise: 0.0005,
        min_separation: 0.35,
    };
    (0..n)
        .map(|i| render_all(&generate_scenario(&cfg, 1000 + i as u64).unwrap()))
        .collect()
}

fn main() {
    let corpus = corpus(40);
    let base_cfg = TrainConfig {
        detect_queries: 4,
        epochs: 16,
        learning_rate: 0.005,
        suppression: 2.5,
        seed: 7,
        ..Default::default()
    };
    let rfs_cfg = TrainConfig {
        enable_rfs: true,
        ..base_cfg.clone()
    };

    eprintln!("training baseline ...");
    let base = run_training(&corpus, None, &base_cfg).expect("baseline run");
    eprintln!("training with release-fetch supervision ...");
    let rfs = run_training(&corpus, None, &rfs_cfg).expect("rfs run");

    let base_stats = assignment_stats(&base.records).unwrap();
    let rfs_stats = assignment_stats(&rfs.records).unwrap();
    let base_mis = misalignment_stats(&base.records).unwrap();
    let rfs_mis = misalignment_stats(&rfs.records).unwrap();

    println!("epoch  pct_detect(base)  pct_detect(rfs)  misaligned(base)  misaligned(rfs)");
    for (i, (b, r)) in base_stats.epochs.iter().zip(&rfs_stats.epochs).enumerate() {
        println!(
            "{:>5}  {:>16.4}  {:>15.4}  {:>16.4}  {:>15.4}",
            i,
            b.pct_detect(),
            r.pct_detect(),
            base_mis.epochs[i].1,
            rfs_mis.epochs[i].1
        );
    }

    let spawn_count = |records: &[motlab::engine::IterationRecord], epoch: usize| -> usize {
        records
            .iter()
            .filter(|r| r.epoch == epoch)
            .flat_map(|r| &r.frames)
            .map(|f| f.spawns.len())
            .sum()
    };
    let last = base_cfg.epochs - 1;
    println!(
        "\nspawns per epoch: base first={} last={}, rfs first={} last={}",
        spawn_count(&base.records, 0),
        spawn_count(&base.records, last),
        spawn_count(&rfs.records, 0),
        spawn_count(&rfs.records, last),
    );
}
