//! Benchmark harness CLI: run experiments from a config file, inspect
//! exported superclass trees, and project labeled vectors to 2-D for plots.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use paug::config::ExperimentConfig;
use paug::experiment::run_experiment;
use paug::projection::project_2d;
use paug::{Error, Result};

#[derive(Parser)]
#[command(name = "paug", version, about = "Feature-space few-shot augmentation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Summarize the superclass trees exported by a run.
    InspectTree {
        #[arg(long)]
        model_dir: PathBuf,
    },
    /// Project a labeled embedding CSV onto its top two principal components.
    Project {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => cmd_run(&config),
        Command::InspectTree { model_dir } => cmd_inspect_tree(&model_dir),
        Command::Project { input, output } => cmd_project(&input, &output),
    }
}

fn cmd_run(config_path: &std::path::Path) -> Result<()> {
    let config = ExperimentConfig::from_file(config_path)?;
    let report = run_experiment(&config)?;
    println!(
        "wrote metrics to {}/metrics.json ({} rows)",
        config.output_dir,
        report.rows.len()
    );
    for agg in &report.aggregates {
        println!(
            "{:<16} n={:<2} accuracy {:.4} +/- {:.4}",
            agg.method, agg.n, agg.mean, agg.std
        );
    }
    Ok(())
}

fn cmd_inspect_tree(dir: &std::path::Path) -> Result<()> {
    let mut found = false;
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("tree_") && n.ends_with(".json"))
                .unwrap_or(false)
        })
        .collect();
    entries.sort();
    for path in entries {
        found = true;
        let text = std::fs::read_to_string(&path)?;
        let doc: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let n_sup = doc["n_sup"].as_u64().unwrap_or(0);
        let assignments = doc["assignments"].as_object().map(|m| m.len()).unwrap_or(0);
        println!("{}: {} superclasses over {} classes", path.display(), n_sup, assignments);
        if let Some(stats) = doc["stats"].as_object() {
            let mut counts = std::collections::BTreeMap::new();
            if let Some(assign) = doc["assignments"].as_object() {
                for sup in assign.values() {
                    *counts.entry(sup.as_u64().unwrap_or(0)).or_insert(0usize) += 1;
                }
            }
            for (sup, stat) in stats {
                let sigma = stat["sigma"]
                    .as_array()
                    .map(|a| {
                        let vals: Vec<f64> =
                            a.iter().filter_map(serde_json::Value::as_f64).collect();
                        vals.iter().sum::<f64>() / vals.len().max(1) as f64
                    })
                    .unwrap_or(0.0);
                let members = counts.get(&sup.parse().unwrap_or(0)).copied().unwrap_or(0);
                println!("  superclass {sup}: {members} classes, mean sigma {sigma:.4}");
            }
        }
    }
    if !found {
        return Err(Error::Data(format!(
            "no tree_*.json files in {}",
            dir.display()
        )));
    }
    Ok(())
}

fn cmd_project(input: &std::path::Path, output: &std::path::Path) -> Result<()> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", input.display())))?;
    let mut samples: Vec<(u32, Vec<f64>, String)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(Error::Parse {
                path: input.display().to_string(),
                line: lineno,
                msg: "expected label plus at least two features".into(),
            });
        }
        let label: u32 = fields[0].parse().map_err(|_| Error::Parse {
            path: input.display().to_string(),
            line: lineno,
            msg: format!("invalid label {:?}", fields[0]),
        })?;
        // Trailing provenance column is optional.
        let (feature_fields, provenance) = match *fields.last().unwrap() {
            "seed" | "gen" => (
                &fields[1..fields.len() - 1],
                fields.last().unwrap().to_string(),
            ),
            _ => (&fields[1..], "seed".to_string()),
        };
        let mut features = Vec::with_capacity(feature_fields.len());
        for f in feature_fields {
            features.push(f.parse::<f64>().map_err(|_| Error::Parse {
                path: input.display().to_string(),
                line: lineno,
                msg: format!("invalid feature value {f:?}"),
            })?);
        }
        samples.push((label, features, provenance));
    }
    let projection = project_2d(&samples)?;
    let mut out = String::from("label,x,y,provenance\n");
    for p in &projection.points {
        use std::fmt::Write as _;
        writeln!(out, "{},{},{},{}", p.label, p.coords[0], p.coords[1], p.provenance).unwrap();
    }
    std::fs::write(output, out)?;
    println!(
        "projected {} points; captured variance {:.6} / {:.6}",
        projection.points.len(),
        projection.captured_variance[0],
        projection.captured_variance[1]
    );
    Ok(())
}
