//! The `atelier` command line: one subcommand per pipeline stage plus `run`,
//! which chains cluster, attribute, and report for each task from a TOML
//! config.
//!
//! Exit codes: 0 on success, 2 when the inputs are at fault (bad flags,
//! missing or malformed files, impossible settings), 3 for internal errors.
//! Clap's own usage errors also exit with 2.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use atelier::align::{DEFAULT_CROP_SIZE, DEFAULT_MARGIN};
use atelier::attribute::{AttributionOptions, Task, DEFAULT_THRESHOLD};
use atelier::dbscan::{Backend, DEFAULT_EPS, DEFAULT_MIN_PTS};
use atelier::embed::EMBED_DIM;
use atelier::metrics::{Convention, ReportOptions, UniverseScope};
use atelier::pipeline::{
    self, parse_config, resolve_run, ClusterPlan, EpsSetting, PipelineError, RunOverrides,
};
use atelier::synth::SynthSpec;

#[derive(Parser)]
#[command(
    name = "atelier",
    version,
    about = "Cluster painted faces and attribute the clusters to artists, styles, and periods"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a painting manifest from an existing one or a directory scan.
    Ingest {
        /// Manifest to validate and normalize (JSON lines).
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Scan a <root>/<style>/<image> tree instead.
        #[arg(long)]
        scan: Option<PathBuf>,
        /// Output manifest path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Cut face crops out of paintings using a detections file.
    Align {
        #[arg(long)]
        manifest: PathBuf,
        /// Detection boxes, one JSON object per line.
        #[arg(long)]
        detections: PathBuf,
        /// Directory for the `<painting_id>__<index>.png` crops.
        #[arg(long)]
        out: PathBuf,
        /// Pixels of context added around each box before clamping.
        #[arg(long, default_value_t = DEFAULT_MARGIN)]
        margin: u32,
        /// Crop edge length in pixels.
        #[arg(long, default_value_t = DEFAULT_CROP_SIZE)]
        size: u32,
    },
    /// Turn face crops or an existing vector file into an embedding store.
    Embed {
        /// Directory of aligned crops to embed.
        #[arg(long)]
        crops: Option<PathBuf>,
        /// Use the built-in deterministic block-intensity embedder.
        #[arg(long)]
        mock: bool,
        /// Import an existing store (binary or one id + floats per line),
        /// re-normalizing every vector.
        #[arg(long, conflicts_with_all = ["crops", "mock"])]
        import: Option<PathBuf>,
        /// Output store path (binary format).
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic corpus with known ground truth.
    Synth {
        /// Directory for manifest.jsonl, embeddings.femb, and truth.jsonl.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 6)]
        identities: usize,
        /// Faces per identity (one painting per face).
        #[arg(long, default_value_t = 200)]
        faces: usize,
        #[arg(long, default_value_t = EMBED_DIM)]
        dim: usize,
        /// Noise scale around each identity center.
        #[arg(long, default_value_t = 0.05)]
        sigma: f64,
        /// Minimum distance between identity centers.
        #[arg(long, default_value_t = 0.8)]
        separation: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Density-cluster an embedding store.
    Cluster {
        #[arg(long)]
        embeddings: PathBuf,
        /// Neighborhood radius, or "elbow" to pick it from the k-distance
        /// profile.
        #[arg(long, default_value_t = DEFAULT_EPS.to_string())]
        eps: String,
        /// Neighborhood size (point included) needed to seed a cluster.
        #[arg(long, default_value_t = DEFAULT_MIN_PTS)]
        min_pts: usize,
        /// Dissolve smaller clusters into noise; defaults to min-pts.
        #[arg(long)]
        min_cluster_size: Option<usize>,
        /// Neighbor search: auto, brute, or tree.
        #[arg(long, default_value = "auto")]
        index: String,
        /// Output assignments path (JSON lines).
        #[arg(long)]
        out: PathBuf,
    },
    /// Label clusters by the majority vote of their members.
    Attribute {
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// artist, style, or year.
        #[arg(long)]
        task: String,
        /// Share of labeled members the winner must exceed.
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Count each painting once per cluster instead of each face.
        #[arg(long)]
        dedupe_paintings: bool,
        /// Output attributions path (JSON lines).
        #[arg(long)]
        out: PathBuf,
    },
    /// Score attributed clusters against the manifest labels.
    Report {
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        attributions: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// artist, style, or year.
        #[arg(long)]
        task: String,
        /// Ratio direction: paper (published-table layout) or standard.
        #[arg(long, default_value = "paper")]
        convention: String,
        /// Denominator population: all-faces or clustered-only.
        #[arg(long, default_value = "all-faces")]
        universe: String,
        /// Score labeled noise faces as singleton clusters.
        #[arg(long)]
        include_noise: bool,
        /// Attribution threshold to echo into the report.
        #[arg(long)]
        threshold: Option<f64>,
        /// Output report path (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Also render the two-block CSV view here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Cluster, attribute, and report every task from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override input.manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Override input.embeddings.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Override output.dir.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Comma-separated subset of artist,style,year.
        #[arg(long)]
        tasks: Option<String>,
        /// Override eps for every task (number or "elbow").
        #[arg(long)]
        eps: Option<String>,
        #[arg(long)]
        min_pts: Option<usize>,
        #[arg(long)]
        min_cluster_size: Option<usize>,
        /// Override the neighbor search backend.
        #[arg(long)]
        index: Option<String>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Count paintings, not faces, when voting (absent: config decides).
        #[arg(long)]
        dedupe_paintings: bool,
        #[arg(long)]
        convention: Option<String>,
        /// Score labeled noise faces as singletons (absent: config decides).
        #[arg(long)]
        include_noise: bool,
        /// Force CSV rendering on.
        #[arg(long)]
        csv: bool,
        /// Force CSV rendering off.
        #[arg(long, conflicts_with = "csv")]
        no_csv: bool,
    },
}

fn invalid<T: std::str::FromStr<Err = String>>(what: &str, raw: &str) -> Result<T, PipelineError> {
    raw.parse::<T>()
        .map_err(|e| PipelineError::Invalid(format!("--{what}: {e}")))
}

fn parse_task_list(raw: &str) -> Result<Vec<Task>, PipelineError> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| invalid::<Task>("tasks", s))
        .collect()
}

fn dispatch(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Ingest {
            manifest,
            scan,
            out,
        } => {
            let n = pipeline::run_ingest(manifest.as_deref(), scan.as_deref(), &out)?;
            println!("wrote {n} painting records to {}", out.display());
        }
        Command::Align {
            manifest,
            detections,
            out,
            margin,
            size,
        } => {
            let summary = pipeline::run_align(&manifest, &detections, &out, margin, size)?;
            println!(
                "wrote {} crops from {} paintings to {}",
                summary.crops,
                summary.paintings,
                out.display()
            );
        }
        Command::Embed {
            crops,
            mock,
            import,
            out,
        } => match (crops, mock, import) {
            (Some(dir), true, None) => {
                let n = pipeline::run_embed_mock(&dir, &out)?;
                println!("embedded {n} crops to {}", out.display());
            }
            (None, false, Some(input)) => {
                let n = pipeline::run_embed_import(&input, &out)?;
                println!("imported {n} embeddings to {}", out.display());
            }
            (Some(_), false, None) => {
                return Err(PipelineError::Invalid(
                    "only the mock embedder is built in: pass --mock with --crops, or \
                     --import an externally produced store"
                        .into(),
                ))
            }
            _ => {
                return Err(PipelineError::Invalid(
                    "embed needs either --crops with --mock, or --import".into(),
                ))
            }
        },
        Command::Synth {
            out,
            identities,
            faces,
            dim,
            sigma,
            separation,
            seed,
        } => {
            let spec = SynthSpec {
                n_identities: identities,
                faces_per_identity: faces,
                dim,
                intra_sigma: sigma,
                min_center_separation: separation,
                seed,
            };
            let summary = pipeline::run_synth(&spec, &out)?;
            println!(
                "generated {} faces across {} identities in {}",
                summary.faces,
                summary.identities,
                out.display()
            );
        }
        Command::Cluster {
            embeddings,
            eps,
            min_pts,
            min_cluster_size,
            index,
            out,
        } => {
            let plan = ClusterPlan {
                eps: invalid::<EpsSetting>("eps", &eps)?,
                min_pts,
                min_cluster_size,
                backend: invalid::<Backend>("index", &index)?,
            };
            let summary = pipeline::run_cluster(&embeddings, &plan, &out)?;
            println!(
                "clustered {} embeddings: {} clusters, {} noise (eps {:.6} [{}], min_pts {}) -> {}",
                summary.points,
                summary.clusters,
                summary.noise,
                summary.eps,
                summary.eps_source,
                min_pts,
                out.display()
            );
        }
        Command::Attribute {
            clusters,
            manifest,
            task,
            threshold,
            dedupe_paintings,
            out,
        } => {
            let task = invalid::<Task>("task", &task)?;
            let options = AttributionOptions {
                threshold,
                dedupe_paintings,
            };
            let summary = pipeline::run_attribute(&clusters, &manifest, task, options, &out)?;
            println!(
                "attributed {} of {} clusters for task {task} -> {}",
                summary.attributed,
                summary.clusters,
                out.display()
            );
        }
        Command::Report {
            clusters,
            attributions,
            manifest,
            task,
            convention,
            universe,
            include_noise,
            threshold,
            out,
            csv,
        } => {
            let task = invalid::<Task>("task", &task)?;
            let options = ReportOptions {
                convention: invalid::<Convention>("convention", &convention)?,
                universe: invalid::<UniverseScope>("universe", &universe)?,
                include_noise_as_singletons: include_noise,
                attribution_threshold: threshold,
                cluster_params: None,
            };
            let report = pipeline::run_report(
                &clusters,
                &attributions,
                &manifest,
                task,
                &options,
                &out,
                csv.as_deref(),
            )?;
            println!(
                "task {task}: {} of {} clusters attributed, purity {:.6}, nmi {:.6}, \
                 rand index {:.6} -> {}",
                report.n_clusters_attributed,
                report.n_clusters_total,
                report.partition.purity,
                report.partition.nmi,
                report.partition.rand_index,
                out.display()
            );
        }
        Command::Run {
            config,
            manifest,
            embeddings,
            out_dir,
            tasks,
            eps,
            min_pts,
            min_cluster_size,
            index,
            threshold,
            dedupe_paintings,
            convention,
            include_noise,
            csv,
            no_csv,
        } => {
            let parsed = parse_config(&pipeline::read_text(&config)?, &config)?;
            let overrides = RunOverrides {
                manifest,
                embeddings,
                out_dir,
                tasks: tasks.as_deref().map(parse_task_list).transpose()?,
                eps: eps
                    .as_deref()
                    .map(|raw| invalid::<EpsSetting>("eps", raw))
                    .transpose()?,
                min_pts,
                min_cluster_size,
                backend: index
                    .as_deref()
                    .map(|raw| invalid::<Backend>("index", raw))
                    .transpose()?,
                threshold,
                dedupe_paintings: dedupe_paintings.then_some(true),
                convention: convention
                    .as_deref()
                    .map(|raw| invalid::<Convention>("convention", raw))
                    .transpose()?,
                include_noise: include_noise.then_some(true),
                csv: if no_csv {
                    Some(false)
                } else {
                    csv.then_some(true)
                },
            };
            let resolved = resolve_run(&parsed, &overrides)?;
            let summary = pipeline::run_pipeline(&resolved)?;
            for (task, t) in &summary.bundle.tasks {
                println!(
                    "task {task}: {} clusters ({} noise of {} faces), {} attributed, \
                     eps {:.6} [{}], purity {:.6}, nmi {:.6}, rand index {:.6}",
                    t.clusters,
                    t.noise,
                    t.faces,
                    t.attributed,
                    t.cluster_params.eps,
                    t.eps_source,
                    t.purity,
                    t.nmi,
                    t.rand_index
                );
            }
            println!("bundle -> {}", summary.bundle_path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = pipeline::init_threads_from_env() {
        eprintln!("atelier: {e}");
        return ExitCode::from(2);
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("atelier: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
