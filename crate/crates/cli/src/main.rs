use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dgsnap_cli::{run_stage, verify_tree, CliError, RunConfig, Stage, EXIT_CONFIG, EXIT_RUNTIME};
use dgsnap_core::ingest::{CourtDims, LinkMode};
use dgsnap_core::ChangeThresholds;

#[derive(Parser)]
#[command(name = "dgsnap", version, about = "Dynamic graph snapshot pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse inputs and write dataset.json.
    Ingest(RunArgs),
    /// Build the snapshot tree: tree.json and summary.txt.
    Tree(RunArgs),
    /// Project selected frames with t-SNE: projection.json.
    Project(RunArgs),
    /// Run everything: dataset, tree, matrix and projection artifacts.
    Export(RunArgs),
    /// Replay a tree.json against its inputs and check the digest.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        /// Tree artifact to check.
        #[arg(long)]
        tree: PathBuf,
    },
    /// Launch the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Provided,
    Proximity,
}

#[derive(Args, Default)]
struct RunArgs {
    /// TOML or JSON run config; its keys override flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tracking: Option<PathBuf>,
    #[arg(long)]
    links: Option<PathBuf>,
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long, value_enum)]
    link_mode: Option<Mode>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    cross_team_only: bool,
    /// Court size as WIDTHxHEIGHT, or `none` to skip bounds checks.
    #[arg(long)]
    court: Option<String>,
    #[arg(long)]
    bounds_tolerance: Option<f64>,
    /// Inclusive frame range FROM:TO.
    #[arg(long)]
    selection: Option<String>,
    /// Layer thresholds NODE,LINK,GAP[,MAX_FRAMES]; repeat for each layer.
    #[arg(long = "layer")]
    layers: Vec<String>,
    #[arg(long)]
    perplexity: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    skip_projection: bool,
}

fn bad_flag(flag: &str, value: &str) -> CliError {
    CliError::config("InvalidFlag", format!("--{flag} `{value}`"))
}

fn parse_layer(s: &str) -> Result<ChangeThresholds, CliError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let num = |p: &str| p.parse::<f64>().map_err(|_| bad_flag("layer", s));
    match parts.as_slice() {
        [n, l, g] => Ok(ChangeThresholds::new(num(n)?, num(l)?, num(g)?, None)?),
        [n, l, g, c] => {
            let cap = c.parse().map_err(|_| bad_flag("layer", s))?;
            Ok(ChangeThresholds::new(num(n)?, num(l)?, num(g)?, Some(cap))?)
        }
        _ => Err(bad_flag("layer", s)),
    }
}

impl RunArgs {
    fn to_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig {
            tracking: self.tracking.clone(),
            links: self.links.clone(),
            events: self.events.clone(),
            skip_projection: self.skip_projection,
            ..RunConfig::default()
        };
        if let Some(o) = &self.out {
            cfg.output = o.clone();
        }
        cfg.dataset.name = self.name.clone();
        if let Some(m) = self.link_mode {
            cfg.dataset.links.mode = match m {
                Mode::Provided => LinkMode::Provided,
                Mode::Proximity => LinkMode::Proximity,
            };
        }
        if let Some(r) = self.radius {
            cfg.dataset.links.proximity_radius = r;
        }
        cfg.dataset.links.cross_team_only = self.cross_team_only;
        if let Some(c) = &self.court {
            cfg.dataset.court = if c == "none" {
                None
            } else {
                let (w, h) = c.split_once('x').ok_or_else(|| bad_flag("court", c))?;
                Some(CourtDims {
                    width: w.parse().map_err(|_| bad_flag("court", c))?,
                    height: h.parse().map_err(|_| bad_flag("court", c))?,
                })
            };
        }
        if let Some(t) = self.bounds_tolerance {
            cfg.dataset.bounds_tolerance = t;
        }
        if let Some(s) = &self.selection {
            let (a, b) = s.split_once(':').ok_or_else(|| bad_flag("selection", s))?;
            cfg.selection = Some([
                a.parse().map_err(|_| bad_flag("selection", s))?,
                b.parse().map_err(|_| bad_flag("selection", s))?,
            ]);
        }
        cfg.schedule = self
            .layers
            .iter()
            .map(|l| parse_layer(l))
            .collect::<Result<_, _>>()?;
        if let Some(p) = self.perplexity {
            cfg.projection.perplexity = p;
        }
        if let Some(s) = self.seed {
            cfg.projection.seed = s;
        }
        if let Some(i) = self.iters {
            cfg.projection.iterations = i;
        }
        match &self.config {
            Some(path) => cfg.overlay_file(path),
            None => Ok(cfg),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (args, stage) = match cli.command {
        Command::Ingest(a) => (a, Stage::Ingest),
        Command::Tree(a) => (a, Stage::Tree),
        Command::Project(a) => (a, Stage::Project),
        Command::Export(a) => (a, Stage::Export),
        Command::Verify { run, tree } => {
            let digest = verify_tree(&run.to_config()?, &tree)?;
            println!("{}: replay reproduces digest {digest}", tree.display());
            return Ok(());
        }
        Command::Serve {
            port,
            host,
            data_dir,
        } => return serve(SocketAddr::new(host, port), &data_dir),
    };
    let cfg = args.to_config()?;
    let report = run_stage(&cfg, stage)?;
    if let Some(table) = &report.summary {
        print!("{table}");
    }
    for f in &report.written {
        println!("wrote {}", cfg.output.join(f).display());
    }
    Ok(())
}

fn serve(addr: SocketAddr, data_dir: &Path) -> Result<(), CliError> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::runtime("Io", e.to_string()))?;
    rt.block_on(dgsnap_service::serve(addr, data_dir.to_path_buf()))
        .map_err(|e| CliError::runtime("Io", e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let err = CliError::config("Usage", e.to_string().trim_end());
            eprintln!("{}", err.to_json());
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(if e.exit_code == 0 {
                EXIT_RUNTIME
            } else {
                e.exit_code
            })
        }
    }
}
