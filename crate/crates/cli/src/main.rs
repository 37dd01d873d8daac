//! `nodecon` command-line driver.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use nodecon::checkpoint::Checkpoint;
use nodecon::graph::{
    convert_linqs, generate_sbm, ingest_bundle, load_citation_bundle, write_bundle, write_id_map, Graph, SbmParams,
};
use nodecon::pipeline::{
    export_embeddings, final_embeddings, linear_evaluate, read_embeddings, train, Preset, TrainConfig,
};

mod demo;

/// Environment variable holding the worker-thread count.
const THREADS_ENV: &str = "NODECON_THREADS";

#[derive(Parser)]
#[command(name = "nodecon", version, about = "Node-wise contrastive graph embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a bundle, dedup edges, compact ids and write it canonically.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert LINQS `.content`/`.cites` files into a bundle.
    ConvertLinqs {
        #[arg(long)]
        content: PathBuf,
        #[arg(long)]
        cites: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seed for the 20-per-class / 500 / 1000 split.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a stochastic block model bundle.
    Sbm {
        /// Comma-separated block sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        blocks: Vec<usize>,
        #[arg(long)]
        p_in: f64,
        #[arg(long)]
        p_out: f64,
        #[arg(long, default_value_t = 16)]
        feature_dim: usize,
        #[arg(long, default_value_t = 3.0)]
        separation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Train(TrainArgs),
    /// Linear-probe a checkpoint (or an exported embedding file).
    Eval {
        #[arg(long, required_unless_present = "embeddings")]
        checkpoint: Option<PathBuf>,
        /// Evaluate an embedding TSV written by `export` instead.
        #[arg(long, conflicts_with = "checkpoint")]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[command(flatten)]
        config: ConfigArgs,
        /// Per-run TSV output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write final embeddings and their 2-D PCA projection.
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Compare exact k-DPP sampling with the enumerated subset law.
    DppDemo(demo::DemoArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    /// 300 epochs, 10 probe runs
    Desk,
    /// 2000 epochs, 50 probe runs
    Full,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    profile: Profile,
    #[arg(long)]
    seed: Option<u64>,
    /// Override one config key (repeatable), e.g. `--set epochs=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

/// Train an encoder and write checkpoint plus metrics.
///
/// Presets toggle the three components (filter, DPP, weights):
///   full        filter on,  DPP on,  weights on   ("ours")
///   wo-all      filter off, DPP off, weights off  ("ours w/o all")
///   with-alpha  filter only
///   with-dpp    DPP only
///   with-w      weights only
///
/// Precedence: profile defaults < --config file < --preset < --seed/--set.
#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    preset: Option<String>,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
    /// Also write `embeddings.tsv` (and its PCA file) into the output dir.
    #[arg(long)]
    export: bool,
}

impl ConfigArgs {
    /// Builds the effective config and a note per layer that changed it.
    fn resolve(&self, preset: Option<&str>, base_file: Option<&Path>) -> Result<(TrainConfig, Vec<String>)> {
        let mut notes = vec![format!(
            "defaults: {} profile",
            match self.profile {
                Profile::Desk => "desk",
                Profile::Full => "full",
            }
        )];
        let mut cfg = match self.profile {
            Profile::Desk => TrainConfig::desk(),
            Profile::Full => TrainConfig::default(),
        };
        for file in base_file.into_iter().chain(self.config.as_deref()) {
            let keys = cfg.apply_file(file)?;
            notes.push(format!("file {}: {}", file.display(), keys.join(", ")));
        }
        if let Some(p) = preset {
            let p: Preset = p.parse().map_err(anyhow::Error::msg)?;
            cfg.apply_preset(p);
            notes.push(format!("preset {}", p.name()));
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            notes.push(format!("flag seed={seed}"));
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|m| anyhow::anyhow!("--set {}: {m}", k.trim()))?;
            notes.push(format!("flag {kv}"));
        }
        cfg.validate()?;
        Ok((cfg, notes))
    }
}

fn load_graph(dir: &Path) -> Result<Graph> {
    load_citation_bundle(dir).with_context(|| format!("loading bundle {}", dir.display()))
}

fn summary_line(g: &Graph) -> String {
    format!("nodes={} edges={} classes={}", g.num_nodes(), g.num_edges(), g.num_classes())
}

/// The config a checkpoint was trained with, if it sits next to one.
fn sibling_config(checkpoint: &Path) -> Option<PathBuf> {
    let p = checkpoint.parent()?.join("config.conf");
    p.exists().then_some(p)
}

fn load_checkpoint_for(path: &Path, g: &Graph) -> Result<Checkpoint> {
    let ck = Checkpoint::load(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    let dims = ck.dims();
    if dims.input != g.feature_dim() {
        bail!(
            "checkpoint expects {}-dimensional features but the bundle has {}",
            dims.input,
            g.feature_dim()
        );
    }
    Ok(ck)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { input, out } => {
            let (g, map) = ingest_bundle(&input)?;
            write_bundle(&g, &out)?;
            if !map.is_identity() {
                let p = out.join("id_map.tsv");
                write_id_map(&map, &p)?;
                info!("ids compacted; mapping written to {}", p.display());
            }
            println!("{}", summary_line(&g));
        }
        Command::ConvertLinqs {
            content,
            cites,
            out,
            seed,
        } => {
            let g = convert_linqs(&content, &cites, seed)?;
            write_bundle(&g, &out)?;
            println!("{}", summary_line(&g));
        }
        Command::Sbm {
            blocks,
            p_in,
            p_out,
            feature_dim,
            separation,
            seed,
            out,
        } => {
            let params = SbmParams {
                block_sizes: blocks,
                p_in,
                p_out,
                feature_dim,
                feature_separation: separation,
            };
            let g = generate_sbm(&params, seed)?;
            write_bundle(&g, &out)?;
            println!("{}", summary_line(&g));
        }
        Command::Train(args) => {
            let g = load_graph(&args.data)?;
            let (cfg, notes) = args.config.resolve(args.preset.as_deref(), None)?;
            for n in &notes {
                eprintln!("config <- {n}");
            }
            eprintln!("config hash {}", cfg.hash());
            std::fs::create_dir_all(&args.out)?;
            std::fs::write(args.out.join("config.conf"), cfg.to_file_string())?;
            let (ck, report) = train(&g, &cfg)?;
            ck.save(args.out.join("checkpoint.bin"))?;
            report.write(&args.out)?;
            if args.export {
                let emb = final_embeddings(&ck.params, &g, &cfg)?;
                export_embeddings(emb.view(), g.labels(), args.out.join("embeddings.tsv"))?;
            }
            print!("{}", report.summary());
        }
        Command::Eval {
            checkpoint,
            embeddings,
            data,
            runs,
            config,
            out,
        } => {
            let g = load_graph(&data)?;
            let base = checkpoint.as_deref().and_then(sibling_config);
            let (cfg, _) = config.resolve(None, base.as_deref())?;
            let emb = match (&checkpoint, &embeddings) {
                (Some(path), _) => {
                    let ck = load_checkpoint_for(path, &g)?;
                    final_embeddings(&ck.params, &g, &cfg)?
                }
                (None, Some(path)) => {
                    let (ids, _, emb) = read_embeddings(path)?;
                    if ids != (0..g.num_nodes()).collect::<Vec<_>>() {
                        bail!("embedding file rows do not match the bundle's nodes 0..{}", g.num_nodes());
                    }
                    emb
                }
                (None, None) => unreachable!("clap requires one of them"),
            };
            let s = linear_evaluate(emb.view(), g.labels(), g.splits(), runs, cfg.seed, &cfg.probe())?;
            let mut tsv = String::from("run\tval_acc\ttest_acc\n");
            for (i, r) in s.runs.iter().enumerate() {
                tsv.push_str(&format!("{i}\t{:.6}\t{:.6}\n", r.val_acc, r.test_acc));
            }
            match out {
                Some(p) => std::fs::write(&p, tsv).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{tsv}"),
            }
            println!("accuracy={:.6} std={:.6} runs={}", s.mean, s.std, s.runs.len());
        }
        Command::Export {
            checkpoint,
            data,
            out,
            config,
        } => {
            let g = load_graph(&data)?;
            let base = sibling_config(&checkpoint);
            let (cfg, _) = config.resolve(None, base.as_deref())?;
            let ck = load_checkpoint_for(&checkpoint, &g)?;
            let emb = final_embeddings(&ck.params, &g, &cfg)?;
            let pca = export_embeddings(emb.view(), g.labels(), &out)?;
            println!("wrote {} and {}", out.display(), pca.display());
        }
        Command::DppDemo(args) => demo::run(&args)?,
    }
    Ok(())
}

fn init_threads() {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return;
    };
    match raw.parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                warn!("could not size worker pool: {e}");
            }
        }
        _ => warn!("ignoring {THREADS_ENV}={raw}: expected a positive integer"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    init_threads();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
