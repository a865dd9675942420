//! Scratch probe: trace the first clips of a baseline run.
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
    (0..n).map(|i| render_all(&generate_scenario(&cfg, 1000 + i as u64).unwrap())).collect()
}

fn main() {
    let corpus = corpus(40);
    let cfg = TrainConfig {
        detect_queries: 4,
        epochs: 1,
        learning_rate: 0.005,
        suppression: 2.5,
        seed: 7,
        enable_rfs: true,
        ..Default::default()
    };
    let out = run_training(&corpus, None, &cfg).expect("run");
    for rec in out.records.iter().take(6) {
        println!("== iter {} seq {} clip {:?}", rec.iteration, rec.sequence, rec.clip);
        for f in &rec.frames {
            let free: Vec<usize> = f.label_roles.iter().filter(|r| matches!(r.role, motlab::lifecycle::Role::Detect)).map(|r| r.label).collect();
            println!("  frame {:>2}: objects {} detect-role {:?} spawns {:?} sigma_t {:?}",
                f.frame, f.objects, free, f.spawns, f.sigma_t);
            for (l, m) in f.stage_matchings.iter().enumerate() {
                println!("      stage {}: {:?}", l, m);
            }
        }
    }
}
