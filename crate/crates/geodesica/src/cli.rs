//! Command-line front end. Commands are deterministic given config + seed;
//! every training run writes a manifest so it can be replayed.
//!
//! Exit codes: 0 success, 2 user/config error, 3 numerical abort,
//! 4 artifact mismatch.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{parse_config, RunConfig};
use crate::eikonal::{
    history_to_csv, relative_error, DistanceModel, EuclideanOracle, GeodesicDistance,
    SphereOracle, EPS_DIAG,
};
use crate::error::{Error, Result};
use crate::manifold::{cosine_rule_distance, Manifold, ManifoldSpec};
use crate::network::{load_checkpoint, save_checkpoint, CheckpointData};

#[derive(Parser)]
#[command(
    name = "geodesica",
    about = "Neural geodesic distance functions on immersed manifolds",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a distance model from a config file; writes checkpoint, loss
    /// history and a run manifest into the output directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint: relative error vs the analytic oracle (where
    /// one exists), metric-axiom spot checks and residual statistics.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Evaluate the manifold's analytic oracle instead of the network.
        #[arg(long, default_value_t = false)]
        oracle: bool,
        #[arg(long, default_value_t = 4096)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trace the geodesic from q to p through the learned flow; emits curve
    /// CSV.
    Trace {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Source point, comma-separated.
        #[arg(long)]
        p: String,
        /// Target point, comma-separated.
        #[arg(long)]
        q: String,
        #[arg(long, default_value_t = 512)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dense distance field and geodesic flow around a point; emits field
    /// CSV.
    Field {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        p: String,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fréchet mean of a sample set under the learned distance.
    Frechet {
        #[arg(long)]
        checkpoint: PathBuf,
        /// CSV of sample points, one per row.
        #[arg(long)]
        samples: PathBuf,
        #[arg(long, default_value_t = 16)]
        chains: usize,
        #[arg(long, default_value_t = 1e-2)]
        lr: f64,
        #[arg(long, default_value_t = 300)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for result JSON and trajectory CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// k-means clustering under the learned distance.
    Cluster {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        max_iters: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimise cubic-spline geodesics for point pairs and compare their
    /// lengths against the learned distance.
    CompareSpline {
        #[arg(long)]
        checkpoint: PathBuf,
        /// CSV of pairs, one `p1..pn,q1..qn` row each.
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value_t = 8)]
        knots: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 50_000)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-4)]
        grad_tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Entry point for the binary; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with exit code 0
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig { .. }
        | Error::InvalidArgument { .. }
        | Error::SchemaMismatch { .. }
        | Error::IoFault { .. }
        | Error::OutOfBounds { .. } => 2,
        Error::ManifoldMismatch { .. } => 4,
        _ => 3,
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Train { config, seed, out } => cmd_train(&config, seed, out),
        Command::Eval {
            checkpoint,
            oracle,
            pairs,
            seed,
            out,
        } => cmd_eval(&checkpoint, oracle, pairs, seed, out),
        Command::Trace {
            checkpoint,
            p,
            q,
            steps,
            out,
        } => cmd_trace(&checkpoint, &p, &q, steps, out),
        Command::Field {
            checkpoint,
            p,
            resolution,
            out,
        } => cmd_field(&checkpoint, &p, resolution, out),
        Command::Frechet {
            checkpoint,
            samples,
            chains,
            lr,
            iters,
            seed,
            out,
        } => cmd_frechet(&checkpoint, &samples, chains, lr, iters, seed, out),
        Command::Cluster {
            checkpoint,
            samples,
            k,
            seed,
            max_iters,
            out,
        } => cmd_cluster(&checkpoint, &samples, k, seed, max_iters, out),
        Command::CompareSpline {
            checkpoint,
            pairs,
            knots,
            lr,
            max_iters,
            grad_tol,
            out,
        } => cmd_compare_spline(&checkpoint, &pairs, knots, lr, max_iters, grad_tol, out),
    }
}

fn emit(out: Option<PathBuf>, contents: &str) -> Result<()> {
    match out {
        Some(path) => crate::io::write_file(&path, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".to_string())
}

fn cmd_train(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let text = crate::io::read_to_string(config_path)?;
    let mut config: RunConfig = parse_config(&text)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let out_dir = out
        .or_else(|| config.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let man = config.build_manifold()?;
    let training = config.training_config()?;

    let manifest = format!(
        "geodesica {}\ngit = {}\nseed = {}\nconfig = {}\n---\n{}",
        env!("CARGO_PKG_VERSION"),
        git_describe(),
        config.seed,
        config_path.display(),
        text
    );
    crate::io::write_file(&out_dir.join("manifest.txt"), &manifest)?;

    let result = crate::eikonal::train(&man, &training, config.seed);
    match result {
        Ok(output) => {
            crate::io::write_file(&out_dir.join("loss.csv"), history_to_csv(&output.history))?;
            let data = CheckpointData {
                spec: man.spec(),
                bounds_low: man.bounds_low().to_vec(),
                bounds_high: man.bounds_high().to_vec(),
                augmentation: output.augmentation.clone(),
                params: output.params,
                state: Some(output.state),
            };
            save_checkpoint(&data, &out_dir.join("checkpoint.bin"))?;
            println!(
                "trained {} updates; checkpoint at {}",
                training.updates,
                out_dir.join("checkpoint.bin").display()
            );
            Ok(())
        }
        Err(Error::NonFiniteLoss { update, last_good }) => {
            // keep the last finite state around for inspection
            crate::io::write_file(
                &out_dir.join("loss.csv"),
                history_to_csv(&last_good.history),
            )?;
            let data = CheckpointData {
                spec: man.spec(),
                bounds_low: man.bounds_low().to_vec(),
                bounds_high: man.bounds_high().to_vec(),
                augmentation: last_good.augmentation.clone(),
                params: last_good.params.clone(),
                state: Some(last_good.state.clone()),
            };
            save_checkpoint(&data, &out_dir.join("checkpoint.last-good.bin"))?;
            Err(Error::NonFiniteLoss { update, last_good })
        }
        Err(e) => Err(e),
    }
}

fn load_model(path: &Path) -> Result<(DistanceModel, Manifold)> {
    let data = load_checkpoint(path)?;
    let man = data.manifold()?;
    data.validate_against(&man)?;
    let model = DistanceModel::new(data.params, man.clone(), data.augmentation)?;
    Ok((model, man))
}

fn analytic_oracle(man: &Manifold) -> Option<Box<dyn GeodesicDistance>> {
    match man.spec() {
        ManifoldSpec::Euclidean { n } => Some(Box::new(EuclideanOracle { dim: n })),
        ManifoldSpec::Hypersphere { .. } => {
            SphereOracle::new(man.clone()).ok().map(|oracle| {
                Box::new(oracle) as Box<dyn GeodesicDistance>
            })
        }
        _ => None,
    }
}

fn cmd_eval(
    checkpoint: &Path,
    use_oracle: bool,
    n_pairs: usize,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<()> {
    let (model, man) = load_model(checkpoint)?;
    let oracle = analytic_oracle(&man);
    let dist: Box<dyn GeodesicDistance> = if use_oracle {
        match analytic_oracle(&man) {
            Some(oracle) => oracle,
            None => {
                return Err(Error::argument(format!(
                    "no analytic oracle for {}",
                    man.spec().describe()
                )))
            }
        }
    } else {
        Box::new(model)
    };

    let rel_error = match (&oracle, man.spec()) {
        (Some(_), ManifoldSpec::Euclidean { .. }) => {
            let d = |p: &[f64], q: &[f64]| EuclideanOracle { dim: p.len() }.distance(p, q).unwrap();
            Some(relative_error(dist.as_ref(), &man, &d, n_pairs, seed)?)
        }
        (Some(_), ManifoldSpec::Hypersphere { .. }) => {
            let man2 = man.clone();
            let d = move |p: &[f64], q: &[f64]| cosine_rule_distance(&man2, p, q);
            Some(relative_error(dist.as_ref(), &man, &d, n_pairs, seed)?)
        }
        _ => None,
    };

    // metric-axiom spot checks over 10⁴ pairs
    let check_pairs = 10_000;
    let points = crate::sampling::sample_uniform(&man, 2 * check_pairs, seed ^ 0xa5a5)?;
    let mut m1_violations = 0usize;
    let mut m2_violations = 0usize;
    let mut m3_max_asym = 0.0f64;
    let mut m5_violations = 0usize;
    for k in 0..check_pairs {
        let p = &points[2 * k];
        let q = &points[2 * k + 1];
        let d = dist.distance(p, q)?;
        if dist.distance(p, p)? != 0.0 {
            m1_violations += 1;
        }
        if d < 0.0 {
            m2_violations += 1;
        }
        m3_max_asym = m3_max_asym.max((d - dist.distance(q, p)?).abs());
        if d < man.pullback_euclidean(p, q) - 1e-12 {
            m5_violations += 1;
        }
    }

    // residual statistics on a subset
    let residual_pairs = n_pairs.min(2000);
    let mut residual_abs = Vec::with_capacity(residual_pairs);
    for k in 0..residual_pairs {
        let p = &points[2 * k];
        let q = &points[2 * k + 1];
        if man.pullback_euclidean(p, q) < EPS_DIAG {
            continue;
        }
        residual_abs.push(
            crate::eikonal::eikonal_residual_of(dist.as_ref(), &man, p, q)?.abs(),
        );
    }
    let residual_mean = residual_abs.iter().sum::<f64>() / residual_abs.len().max(1) as f64;
    let residual_max = residual_abs.iter().cloned().fold(0.0, f64::max);

    let report = serde_json::json!({
        "manifold": man.spec().describe(),
        "oracle_bypass": use_oracle,
        "relative_l2_error": rel_error,
        "n_pairs": n_pairs,
        "axiom_checks": {
            "pairs": check_pairs,
            "m1_violations": m1_violations,
            "m2_violations": m2_violations,
            "m3_max_abs_asymmetry": m3_max_asym,
            "m5_violations": m5_violations,
        },
        "residual": {
            "pairs": residual_abs.len(),
            "mean_abs": residual_mean,
            "max_abs": residual_max,
        },
        "seed": seed,
    });
    let text = serde_json::to_string_pretty(&report).expect("serializable") + "\n";
    println!("{text}");
    if let Some(path) = out {
        crate::io::write_file(&path, &text)?;
    }
    Ok(())
}

fn cmd_trace(
    checkpoint: &Path,
    p: &str,
    q: &str,
    steps: usize,
    out: Option<PathBuf>,
) -> Result<()> {
    let (model, man) = load_model(checkpoint)?;
    let p = crate::io::parse_point(p)?;
    let q = crate::io::parse_point(q)?;
    if !man.in_bounds(&p) {
        return Err(Error::OutOfBounds { point: p });
    }
    if !man.in_bounds(&q) {
        return Err(Error::OutOfBounds { point: q });
    }
    let curve = crate::geoflow::trace_geodesic(&model, &man, &p, &q, steps)?;
    emit(out, &curve.to_csv())
}

fn cmd_field(
    checkpoint: &Path,
    p: &str,
    resolution: usize,
    out: Option<PathBuf>,
) -> Result<()> {
    let (model, man) = load_model(checkpoint)?;
    let p = crate::io::parse_point(p)?;
    if !man.in_bounds(&p) {
        return Err(Error::OutOfBounds { point: p });
    }
    if resolution < 2 {
        return Err(Error::argument("resolution must be >= 2"));
    }
    let field = crate::geoflow::field_on_grid(&model, &man, &p, resolution)?;
    emit(out, &field.to_csv())
}

fn cmd_frechet(
    checkpoint: &Path,
    samples_path: &Path,
    chains: usize,
    lr: f64,
    iters: usize,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<()> {
    let (model, man) = load_model(checkpoint)?;
    let text = crate::io::read_to_string(samples_path)?;
    let samples = crate::io::parse_samples_csv(&text, Some(man.dim()))?;
    let opts = crate::apps::FrechetOptions {
        chains,
        lr,
        iters,
        seed,
        ..Default::default()
    };
    let result = crate::apps::frechet_mean(&model, &man, &samples, &opts)?;
    let report = serde_json::json!({
        "mean": result.mean,
        "chains": result.chains,
        "projections": result.projections,
        "final_objectives": result.objectives.iter().map(|h| *h.last().unwrap()).collect::<Vec<_>>(),
        "seed": seed,
    });
    let json = serde_json::to_string_pretty(&report).expect("serializable") + "\n";
    println!("{json}");
    if let Some(dir) = out {
        crate::io::write_file(&dir.join("frechet.json"), &json)?;
        // trajectories: chain, iter, coordinates
        let mut csv = String::from("chain,iter");
        for j in 1..=man.dim() {
            csv.push_str(&format!(",x{j}"));
        }
        csv.push_str(",objective\n");
        for (c, (trajectory, objective)) in result
            .trajectories
            .iter()
            .zip(&result.objectives)
            .enumerate()
        {
            for (i, point) in trajectory.iter().enumerate() {
                csv.push_str(&format!("{c},{i}"));
                for v in point {
                    csv.push(',');
                    csv.push_str(&crate::io::fmt_f64(*v));
                }
                csv.push(',');
                csv.push_str(&crate::io::fmt_f64(objective[i.min(objective.len() - 1)]));
                csv.push('\n');
            }
        }
        crate::io::write_file(&dir.join("frechet_trajectories.csv"), &csv)?;
    }
    Ok(())
}

fn cmd_cluster(
    checkpoint: &Path,
    samples_path: &Path,
    k: usize,
    seed: u64,
    max_iters: usize,
    out: Option<PathBuf>,
) -> Result<()> {
    let (model, man) = load_model(checkpoint)?;
    let text = crate::io::read_to_string(samples_path)?;
    let samples = crate::io::parse_samples_csv(&text, Some(man.dim()))?;
    let opts = crate::apps::KmeansOptions {
        seed,
        max_iters,
        ..Default::default()
    };
    let result = crate::apps::kmeans(&model, &man, &samples, k, &opts)?;
    let report = serde_json::json!({
        "k": k,
        "iterations": result.iterations,
        "centroids": result.centroids,
        "objective_history": result.objective_history,
        "seed": seed,
    });
    let json = serde_json::to_string_pretty(&report).expect("serializable") + "\n";
    println!("{json}");
    if let Some(dir) = out {
        crate::io::write_file(&dir.join("cluster.json"), &json)?;
        let mut csv = String::new();
        for j in 1..=man.dim() {
            csv.push_str(&format!("x{j},"));
        }
        csv.push_str("cluster\n");
        for (x, a) in samples.iter().zip(&result.assignments) {
            for v in x {
                csv.push_str(&crate::io::fmt_f64(*v));
                csv.push(',');
            }
            csv.push_str(&format!("{a}\n"));
        }
        crate::io::write_file(&dir.join("assignments.csv"), &csv)?;
        let mut obj = String::from("iteration,objective\n");
        for (i, v) in result.objective_history.iter().enumerate() {
            obj.push_str(&format!("{i},{}\n", crate::io::fmt_f64(*v)));
        }
        crate::io::write_file(&dir.join("objective.csv"), &obj)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_compare_spline(
    checkpoint: &Path,
    pairs_path: &Path,
    knots: usize,
    lr: f64,
    max_iters: usize,
    grad_tol: f64,
    out: Option<PathBuf>,
) -> Result<()> {
    let (model, man) = load_model(checkpoint)?;
    let text = crate::io::read_to_string(pairs_path)?;
    let pairs = crate::io::parse_pairs_csv(&text, Some(man.dim()))?;
    let rows =
        crate::baseline::compare_against_model(&model, &man, &pairs, knots, lr, max_iters, grad_tol)?;
    emit(out, &crate::baseline::comparison_to_csv(&rows))
}
