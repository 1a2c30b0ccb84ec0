//! Command-line entry points. Every command reads one JSON config, writes
//! its outputs under the working directory and echoes the fully defaulted
//! config next to them.

pub mod config;
pub mod experiments;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::engine::{write_adversarial_ppms, write_perturbation, AttackConfig};
use crate::error::{Error, Result};
use crate::track::{run_benchmark, success_thresholds, BenchmarkReport, Condition, ConditionKind, ConditionSummary};
use crate::zoo::{generate_dataset, load_zoo, read_manifest, save_zoo, train_default_zoo, Manifest, ModelRecord, ZooConfig};
pub use config::{load_config, parse_config, AblateConfig, AttackRunConfig, TrackEvalConfig, ZooTrainConfig};
pub use experiments::{ablation_conditions, fidelity, run_episode, sigma_conditions, sign_test_p, EpisodeReport};

pub const CONFIG_ECHO: &str = "config_echo.json";

#[derive(Debug, Parser)]
#[command(name = "amga", version, about = "Meta-gradient ensemble attacks on a small classifier zoo and a surrogate tracker")]
pub struct Cli {
    /// Base directory for config, input and output paths.
    #[arg(long, global = true, default_value = ".")]
    pub workdir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the default model zoo and write its manifest.
    ZooTrain {
        #[arg(long)]
        config: PathBuf,
    },
    /// Attack validation images and report accuracy drops.
    Attack {
        #[arg(long)]
        config: PathBuf,
    },
    /// Track the sequence suite clean, under random noise and under attack.
    TrackEval {
        #[arg(long)]
        config: PathBuf,
    },
    /// Component ablation and smoothing-width sweep on the tracking suite.
    Ablate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Success-plot curves from a track-eval output directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve(workdir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        workdir.join(p)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Contract(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

fn prepare_output<T: Serialize>(dir: &Path, echo: &T) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join(CONFIG_ECHO), echo)
}

fn open_zoo(dir: &Path) -> Result<(Manifest, Vec<ModelRecord>)> {
    if read_manifest(dir).is_err() {
        return Err(Error::config(format!("no zoo manifest under {}; run zoo-train first", dir.display())));
    }
    load_zoo(dir)
}

pub fn cmd_zoo_train(workdir: &Path, config: &ZooTrainConfig) -> Result<Manifest> {
    let out = resolve(workdir, &config.output);
    prepare_output(&out, config)?;
    let (_, models) = train_default_zoo(&config.zoo)?;
    save_zoo(&out, &config.zoo, &models)
}

#[derive(Clone, Debug, Serialize)]
pub struct AttackReport {
    pub config: AttackRunConfig,
    pub zoo: ZooConfig,
    pub images: usize,
    pub episodes: Vec<EpisodeReport>,
    pub mean_held_in_ensemble_drop: f64,
    pub mean_held_out_drop: f64,
    pub mean_held_out_random_drop: f64,
}

pub fn cmd_attack(workdir: &Path, config: &AttackRunConfig) -> Result<AttackReport> {
    config.attack.validate()?;
    if config.episodes == 0 {
        return Err(Error::config("episodes must be at least 1"));
    }
    let (manifest, zoo) = open_zoo(&resolve(workdir, &config.zoo_dir))?;
    let out = resolve(workdir, &config.output);
    prepare_output(&out, config)?;
    let images = generate_dataset(&manifest.config.dataset)?.validation_interleaved().head(config.images);
    let mut episodes = Vec::with_capacity(config.episodes);
    for e in 0..config.episodes {
        let cfg = AttackConfig {
            seed: config.attack.seed.wrapping_add(e as u64),
            ..config.attack.clone()
        };
        let (report, result) = run_episode(&zoo, &images, &cfg)?;
        let dir = out.join(format!("episode_{e:02}"));
        std::fs::create_dir_all(&dir).map_err(|err| Error::io(&dir, err))?;
        write_perturbation(&dir.join("perturbation.amgadlt"), &result)?;
        if config.write_images {
            write_adversarial_ppms(&dir.join("adversarial"), "adv", &result.adversarial_example)?;
        }
        episodes.push(report);
    }
    let mean = |f: fn(&EpisodeReport) -> f64| episodes.iter().map(f).sum::<f64>() / episodes.len() as f64;
    let report = AttackReport {
        config: config.clone(),
        zoo: manifest.config.clone(),
        images: images.len(),
        mean_held_in_ensemble_drop: mean(|e| e.held_in_ensemble.drop),
        mean_held_out_drop: mean(|e| e.held_out_mean_drop),
        mean_held_out_random_drop: mean(|e| e.held_out_mean_random_drop),
        episodes,
    };
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct TrackSummary {
    pub config: TrackEvalConfig,
    pub feature_model: String,
    pub attack_repo: Vec<String>,
    pub conditions: Vec<ConditionSummary>,
}

fn condition_name(kind: ConditionKind) -> &'static str {
    match kind {
        ConditionKind::Clean => "clean",
        ConditionKind::RandomNoise => "random_noise",
        ConditionKind::Amga => "amga",
    }
}

pub fn cmd_track_eval(workdir: &Path, config: &TrackEvalConfig) -> Result<BenchmarkReport> {
    let (_, zoo) = open_zoo(&resolve(workdir, &config.zoo_dir))?;
    let out = resolve(workdir, &config.output);
    prepare_output(&out, config)?;
    let conditions: Vec<Condition> = config
        .conditions
        .iter()
        .map(|&k| Condition::new(condition_name(k), k, config.attack.clone()))
        .collect();
    let report = run_benchmark(&config.sequences, &zoo, &conditions, &config.benchmark)?;
    write_text(&out.join("benchmark.csv"), &report.to_csv())?;
    write_json(
        &out.join("summary.json"),
        &TrackSummary {
            config: config.clone(),
            feature_model: report.feature_model.clone(),
            attack_repo: report.attack_repo.clone(),
            conditions: report.summary.clone(),
        },
    )?;
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationSummary {
    pub config: AblateConfig,
    pub components: Vec<ConditionSummary>,
    pub sigma_sweep: Vec<ConditionSummary>,
}

fn fmt_psnr(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "inf".into()
    }
}

pub fn cmd_ablate(workdir: &Path, config: &AblateConfig) -> Result<AblationSummary> {
    let (_, zoo) = open_zoo(&resolve(workdir, &config.zoo_dir))?;
    let out = resolve(workdir, &config.output);
    prepare_output(&out, config)?;
    let components = ablation_conditions(&config.attack);
    let mut sweep = vec![Condition::new("no_attack", ConditionKind::Clean, config.attack.clone())];
    sweep.extend(sigma_conditions(&config.attack, &config.sigmas));

    let a = run_benchmark(&config.sequences, &zoo, &components, &config.benchmark)?;
    let s = run_benchmark(&config.sequences, &zoo, &sweep, &config.benchmark)?;

    let mut table = String::from("row,success_rate,success_drop,precision,precision_drop,psnr,ssim\n");
    for r in &a.summary {
        table.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.condition,
            r.mean.success_auc,
            r.success_drop.unwrap_or(0.0),
            r.mean.precision_at_20,
            r.precision_drop.unwrap_or(0.0),
            fmt_psnr(r.psnr),
            r.ssim
        ));
    }
    write_text(&out.join("ablation.csv"), &table)?;
    let mut table = String::from("sigma,success_drop,precision_drop,psnr,ssim\n");
    for (r, sigma) in s.summary[1..].iter().zip(&config.sigmas) {
        table.push_str(&format!(
            "{},{},{},{},{}\n",
            sigma,
            r.success_drop.unwrap_or(0.0),
            r.precision_drop.unwrap_or(0.0),
            fmt_psnr(r.psnr),
            r.ssim
        ));
    }
    write_text(&out.join("sigma_sweep.csv"), &table)?;
    let summary = AblationSummary {
        config: config.clone(),
        components: a.summary,
        sigma_sweep: s.summary[1..].to_vec(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Reads `summary.json` from a track-eval run and writes
/// `success_curves.csv` with one column per condition.
pub fn cmd_report(input: &Path, out: &Path) -> Result<String> {
    let path = input.join("summary.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.clone(),
        source: crate::error::FormatError::Header(e.to_string()),
    })?;
    let conditions = v["conditions"]
        .as_array()
        .ok_or_else(|| Error::config(format!("{} has no conditions", path.display())))?;
    let mut names = Vec::new();
    let mut curves: Vec<Vec<f64>> = Vec::new();
    for c in conditions {
        names.push(c["condition"].as_str().unwrap_or("?").to_string());
        let curve: Vec<f64> = c["success_curve"]
            .as_array()
            .map(|a| a.iter().filter_map(|x| x.as_f64()).collect())
            .unwrap_or_default();
        curves.push(curve);
    }
    let thresholds = success_thresholds();
    if curves.iter().any(|c| c.len() != thresholds.len()) {
        return Err(Error::config(format!("{}: success curves do not match the threshold grid", path.display())));
    }
    let mut csv = format!("threshold,{}\n", names.join(","));
    for (i, t) in thresholds.iter().enumerate() {
        let row: Vec<String> = curves.iter().map(|c| c[i].to_string()).collect();
        csv.push_str(&format!("{:.2},{}\n", t, row.join(",")));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_text(&out.join("success_curves.csv"), &csv)?;
    Ok(csv)
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    let w = &cli.workdir;
    let started = Instant::now();
    let name = match &cli.command {
        Command::ZooTrain { config } => {
            let m = cmd_zoo_train(w, &load_config(&resolve(w, config))?)?;
            for e in &m.models {
                log::info!("{}: clean accuracy {:.3}", e.name, e.clean_accuracy);
            }
            "zoo-train"
        }
        Command::Attack { config } => {
            let r = cmd_attack(w, &load_config(&resolve(w, config))?)?;
            log::info!(
                "held-in ensemble drop {:.3}, held-out drop {:.3}, random-noise held-out drop {:.3}",
                r.mean_held_in_ensemble_drop,
                r.mean_held_out_drop,
                r.mean_held_out_random_drop
            );
            "attack"
        }
        Command::TrackEval { config } => {
            let r = cmd_track_eval(w, &load_config(&resolve(w, config))?)?;
            for s in &r.summary {
                log::info!("{}: success {:.3}, precision {:.3}", s.condition, s.mean.success_auc, s.mean.precision_at_20);
            }
            "track-eval"
        }
        Command::Ablate { config } => {
            cmd_ablate(w, &load_config(&resolve(w, config))?)?;
            "ablate"
        }
        Command::Report { input, out } => {
            cmd_report(&resolve(w, input), &resolve(w, out))?;
            "report"
        }
    };
    // wall-clock time stays out of the output files so reruns are byte-identical
    log::info!("{name} finished in {:.1} s", started.elapsed().as_secs_f64());
    Ok(())
}

/// Caps the global thread pool at `AMGA_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("AMGA_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::config(format!("AMGA_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::config(format!("thread pool: {e}")))
}
