use advloc::attack::{optimize_patch, write_history_csv, AttackConfig, PatchMeta};
use advloc::harness::{
    baseline_compare, run_pipeline_with, write_report, ExperimentConfig, PatchSpec, RegionScan, StageStatus,
};
use advloc::locnet::{
    evaluate, load_checkpoint, saliency_map, save_checkpoint, train_with, write_errors_csv, Architecture,
    Normalization, PoseModel, TrainConfig,
};
use advloc::nav::{drive_simulate, turn_decision, write_trace_csv, ApproachRegion, DriveConfig};
use advloc::render::{load_dataset, render_dataset, write_dataset, DatasetSampler, Image, Split};
use advloc::world::{generate_city, make_route, CityConfig, CityModel, IntersectionId, Route};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "advloc", about = "Adversarial billboard patches against a pose-regression localizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a procedural city and write it as JSON.
    GenCity {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// City generation parameters (JSON); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a labeled image dataset from a city.
    RenderDataset {
        #[arg(long)]
        city: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, default_value_t = 3)]
        seed: u64,
        /// Sampler parameters (JSON); `--count` overrides its count.
        #[arg(long)]
        sampler: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the localization network.
    Train {
        #[arg(long)]
        city: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Training parameters (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Architecture (JSON).
        #[arg(long)]
        arch: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch CSV log.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Position and heading errors of a model on a dataset split.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// Per-image error CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Occlusion saliency map of one image.
    Saliency {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 4)]
        block: usize,
        /// Loss weight of the heading term; match the value the model was trained with.
        #[arg(long, default_value_t = 1.0)]
        direction_weight: f64,
        /// Output prefix; writes PREFIX.csv and PREFIX.png.
        #[arg(long)]
        out: PathBuf,
    },
    /// Craft a billboard patch with the black-box search.
    Attack {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        city: PathBuf,
        /// Attack parameters (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        budget: Option<usize>,
        #[command(flatten)]
        route: RouteArgs,
        /// Patch PNG; metadata and history go next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Drive the approach with a patch on the billboard.
    Drive {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        city: PathBuf,
        /// `black`, `white`, `random:SEED` or a patch PNG.
        #[arg(long, default_value = "black")]
        patch: String,
        #[command(flatten)]
        route: RouteArgs,
        #[command(flatten)]
        region: RegionArgs,
        /// Drive parameters (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the whole experiment pipeline.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Drive with several patches and compare them against the black patch.
    Compare {
        #[arg(long)]
        model: PathBuf,
        /// Defaults to `city.json` next to the model.
        #[arg(long)]
        city: Option<PathBuf>,
        /// Comma-separated list, for example `adversarial.png,black,white,random:99`.
        #[arg(long)]
        patches: String,
        #[command(flatten)]
        route: RouteArgs,
        #[command(flatten)]
        region: RegionArgs,
        #[arg(long, default_value = "comparison")]
        out: PathBuf,
    },
    /// Print the default experiment configuration.
    DefaultConfig,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Args)]
struct RouteArgs {
    #[arg(long = "from", default_value = "1,0")]
    from: IntersectionId,
    #[arg(long = "turn-at", default_value = "1,2")]
    turn_at: IntersectionId,
    #[arg(long = "to", default_value = "2,2")]
    to: IntersectionId,
}

impl RouteArgs {
    fn route(&self, city: &CityModel) -> Result<Route> {
        Ok(make_route(city, self.from, self.turn_at, self.to)?)
    }
}

#[derive(Args)]
struct RegionArgs {
    #[arg(long, default_value_t = -45.0, allow_hyphen_values = true)]
    l1: f64,
    #[arg(long, default_value_t = -15.0, allow_hyphen_values = true)]
    l2: f64,
}

impl RegionArgs {
    fn region(&self) -> ApproachRegion {
        ApproachRegion { l1: self.l1, l2: self.l2 }
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_json_or_default<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), |p| read_json(p))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_city(path: &Path) -> Result<CityModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(CityModel::from_json(&text)?)
}

fn load_model(path: &Path) -> Result<PoseModel<f32>> {
    Ok(load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?.0)
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenCity { seed, config, out } => {
            let config: CityConfig = read_json_or_default(config.as_ref())?;
            let city = generate_city(seed, &config)?;
            std::fs::write(&out, city.to_json()).with_context(|| format!("writing {}", out.display()))?;
            eprintln!(
                "city {:.0} x {:.0} m, {} streets, {} buildings",
                city.extent.x,
                city.extent.y,
                city.streets.len(),
                city.buildings.len()
            );
        }
        Command::RenderDataset {
            city,
            count,
            seed,
            sampler,
            out,
        } => {
            let city = load_city(&city)?;
            let mut sampler: DatasetSampler = read_json_or_default(sampler.as_ref())?;
            if let Some(n) = count {
                sampler.count = n;
            }
            let ds = render_dataset(&city, &sampler, seed)?;
            write_dataset(&ds, &out)?;
            eprintln!(
                "{} train / {} test images in {}",
                ds.count(Split::Train),
                ds.count(Split::Test),
                out.display()
            );
        }
        Command::Train {
            city,
            dataset,
            config,
            arch,
            epochs,
            seed,
            out,
            history,
        } => {
            let city = load_city(&city)?;
            let ds = load_dataset(&dataset)?;
            let mut config: TrainConfig = read_json_or_default(config.as_ref())?;
            if let Some(e) = epochs {
                config.epochs = e;
            }
            let arch: Architecture = read_json_or_default(arch.as_ref())?;
            let model = PoseModel::<f32>::new(arch, Normalization::for_city(&city), seed)?;
            eprintln!("{} parameters", model.parameter_count());
            let (model, hist) = train_with(model, &ds, &config, |e| {
                eprintln!(
                    "epoch {:3}  lr {:.2e}  loss {:.4}  train {:.1} m {:.1} deg  test {}",
                    e.epoch,
                    e.learning_rate,
                    e.train_loss,
                    e.train_mean_position,
                    e.train_mean_angular,
                    match (e.test_mean_position, e.test_mean_angular) {
                        (Some(p), Some(a)) => format!("{p:.1} m {a:.1} deg"),
                        _ => "-".into(),
                    }
                )
            })?;
            save_checkpoint(&model, &out)?;
            if let Some(h) = history {
                hist.write_csv(&h)?;
            }
        }
        Command::Eval {
            model,
            dataset,
            split,
            out,
        } => {
            let model = load_model(&model)?;
            let ds = load_dataset(&dataset)?;
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            let stats = evaluate(&model, &ds, split)?;
            println!(
                "{} images: position mean {:.2} m median {:.2} m, heading mean {:.2} deg median {:.2} deg",
                stats.records.len(),
                stats.mean_position,
                stats.median_position,
                stats.mean_angular,
                stats.median_angular
            );
            if let Some(out) = out {
                write_errors_csv(&stats, &out)?;
            }
        }
        Command::Saliency {
            model,
            image,
            block,
            direction_weight,
            out,
        } => {
            let model = load_model(&model)?;
            let image = Image::load_png(&image)?;
            let grid = saliency_map(&model, &image, block, direction_weight)?;
            grid.write_csv(&sibling(&out, "csv"))?;
            grid.save_png(&sibling(&out, "png"))?;
            let (r, c) = grid.argmax();
            println!("most salient block: row {r}, col {c}, delta {:.5}", grid.get(r, c));
        }
        Command::Attack {
            model,
            city,
            config,
            budget,
            route,
            out,
        } => {
            let model = load_model(&model)?;
            let city = load_city(&city)?;
            let route = route.route(&city)?;
            let mut config: AttackConfig = read_json_or_default(config.as_ref())?;
            if let Some(b) = budget {
                config.budget = b;
            }
            let result = optimize_patch(&model, &city, &route, &config)?;
            result.patch.save_png(&out)?;
            write_json(&sibling(&out, "json"), &PatchMeta::new(&config, &result))?;
            write_history_csv(&result.history, &sibling(&out, "history.csv"))?;
            println!(
                "V {:.4} -> {:.4} after {} evaluations",
                result.initial_value, result.best_value, result.evaluations
            );
        }
        Command::Drive {
            model,
            city,
            patch,
            route,
            region,
            config,
            out,
        } => {
            let model = load_model(&model)?;
            let city = load_city(&city)?;
            let route = route.route(&city)?;
            let drive: DriveConfig = read_json_or_default(config.as_ref())?;
            let patch = patch.parse::<PatchSpec>()?.load()?;
            let trace = drive_simulate(&city, &route, &model, Some(&patch.patch), &drive)?;
            write_trace_csv(&trace, &out)?;
            let outcome = turn_decision(&trace, &region.region())?;
            write_json(&sibling(&out, "outcome.json"), &outcome)?;
            println!("{}", serde_json::to_string_pretty(&outcome)?);
        }
        Command::Run { config, out } => {
            let mut config: ExperimentConfig = read_json_or_default(config.as_ref())?;
            if let Some(out) = out {
                config.output_dir = out;
            }
            let run = run_pipeline_with(&config, &mut |line| eprintln!("{line}"))?;
            for (stage, status) in &run.statuses {
                let status = match status {
                    StageStatus::Ran => "ran",
                    StageStatus::Skipped => "skipped",
                };
                println!("{stage:8} {status}");
            }
            println!("{}", serde_json::to_string_pretty(&run.summary)?);
        }
        Command::Compare {
            model,
            city,
            patches,
            route,
            region,
            out,
        } => {
            let city_path = city.unwrap_or_else(|| model.with_file_name("city.json"));
            let city = load_city(&city_path)?;
            let model = load_model(&model)?;
            let route = route.route(&city)?;
            let specs = PatchSpec::parse_list(&patches)?;
            if !specs.contains(&PatchSpec::Black) {
                bail!("the patch list needs `black` as the reference");
            }
            let patches = specs.iter().map(PatchSpec::load).collect::<Result<Vec<_>, _>>()?;
            let table = baseline_compare(&model, &city, &route, &patches, &DriveConfig::default(), &region.region())?;
            let traces = out.join("traces");
            std::fs::create_dir_all(&traces)?;
            for row in &table.rows {
                write_trace_csv(&row.trace, &out.join(&row.trace_file))?;
            }
            let target = patches
                .iter()
                .map(|p| p.label.as_str())
                .find(|l| !matches!(*l, "black" | "white" | "random"))
                .unwrap_or("black");
            let summary = write_report(&out.join("report"), &table, target, &RegionScan::default())?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::DefaultConfig => {
            println!("{}", serde_json::to_string_pretty(&ExperimentConfig::default())?);
        }
    }
    Ok(())
}
