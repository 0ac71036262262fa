// throughput & convergence probe for desk-scale budgets
use geodesica::eikonal::{relative_error, train, AugmentationKind, TrainingConfig};
use geodesica::manifold::Manifold;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let updates: usize = args.get(1).and_then(|v| v.parse().ok()).unwrap_or(300);
    let man = Manifold::euclidean(2).unwrap();
    let mut config = TrainingConfig::desk(AugmentationKind::Global);
    config.updates = updates;
    config.log_every = 50;
    let t0 = std::time::Instant::now();
    let out = train(&man, &config, 1).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!("updates={updates} wall={dt:.1}s per_update={:.1}ms", dt / updates as f64 * 1e3);
    for rec in &out.history {
        println!("  update {:6}  loss {:.6e}  lr {:.3e}", rec.update, rec.loss, rec.lr);
    }
    let model = out.into_model(man.clone()).unwrap();
    let d = |p: &[f64], q: &[f64]| {
        p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };
    let err = relative_error(&model, &man, &d, 4096, 7).unwrap();
    println!("relative l2 error after {updates} updates: {err:.4e}");
}
