use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scriptclique_core::calibration::{load_labels, write_calibration_csv};
use scriptclique_core::filter::{counterblock_csv, counterblock_report, parse_filter_list, FilterSet};
use scriptclique_core::report::parse_category_map;
use scriptclique_core::{
    analyze, categorize, harvest, load_corpus, sweep, top_cliques, AnalysisConfig, CliqueReport, Error, HarvestConfig,
    ThresholdGrid,
};
use tracing::{info, warn, Level};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

/// Finds scripts shared across websites by clustering them into similarity cliques.
#[derive(Debug, Parser)]
#[command(name = "scriptclique", version, about)]
struct Cli {
    /// Analysis configuration file (TOML or JSON); unset keys keep their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output path. Required for `harvest` (the corpus directory); other commands
    /// write to stdout when it is absent.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Only log warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fetch front pages and their scripts into a corpus directory.
    Harvest(HarvestArgs),
    /// Build the similarity graph, enumerate cliques and write the report JSON.
    Analyze(AnalyzeArgs),
    /// Sweep the similarity threshold and write `threshold,n_cliques,n_labeled,tpr`.
    Calibrate(CalibrateArgs),
    /// Decide whether each filter list blocks the anti-adblock vendors in a report.
    CheckBlocking(CheckBlockingArgs),
    /// Category distribution of the sites running anti-adblock scripts.
    Categorize(CategorizeArgs),
    /// The cliques spanning the most sites.
    Top(TopArgs),
}

#[derive(Debug, Args)]
struct HarvestArgs {
    /// File with one page URL per line; blank lines and `#` comments are ignored.
    #[arg(long, value_name = "PATH")]
    urls: PathBuf,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = scriptclique_core::harvest::DEFAULT_TIMEOUT_SECS)]
    timeout: u64,
    /// Sites fetched concurrently.
    #[arg(long, default_value_t = scriptclique_core::harvest::DEFAULT_MAX_PARALLEL_SITES)]
    parallel: usize,
    #[arg(long, default_value = scriptclique_core::harvest::DEFAULT_USER_AGENT)]
    user_agent: String,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long, value_name = "DIR")]
    corpus: PathBuf,
    /// Signature ruleset JSON replacing the built-in one.
    #[arg(long, value_name = "PATH")]
    rules: Option<PathBuf>,
    /// Also write the graph's edges as `node_a,node_b,score`.
    #[arg(long, value_name = "PATH")]
    dump_graph: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long, value_name = "DIR")]
    corpus: PathBuf,
    /// Ground-truth labels JSON; without it the `tpr` column stays empty.
    #[arg(long, value_name = "PATH")]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = scriptclique_core::calibration::DEFAULT_T_MIN)]
    min: f64,
    #[arg(long, default_value_t = scriptclique_core::calibration::DEFAULT_T_MAX)]
    max: f64,
    #[arg(long, default_value_t = scriptclique_core::calibration::DEFAULT_STEP)]
    step: f64,
}

#[derive(Debug, Args)]
struct CheckBlockingArgs {
    #[arg(long, value_name = "PATH")]
    report: PathBuf,
    /// A filter list as `name=path`; repeat for several lists.
    #[arg(long = "list", value_name = "NAME=PATH", value_parser = parse_list_arg, required = true)]
    lists: Vec<(String, PathBuf)>,
}

#[derive(Debug, Args)]
struct CategorizeArgs {
    #[arg(long, value_name = "PATH")]
    report: PathBuf,
    /// CSV of `site_id,category` rows.
    #[arg(long, value_name = "PATH")]
    categories: PathBuf,
}

#[derive(Debug, Args)]
struct TopArgs {
    #[arg(long, value_name = "PATH")]
    report: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
}

fn parse_list_arg(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected NAME=PATH, got {s:?}")),
    }
}

fn load_config(path: Option<&Path>) -> scriptclique_core::Result<AnalysisConfig> {
    match path {
        Some(p) => AnalysisConfig::from_file(p),
        None => Ok(AnalysisConfig::default()),
    }
}

/// Writes `bytes` to `out`, or to stdout when no path was given.
fn emit(out: Option<&Path>, bytes: &[u8]) -> scriptclique_core::Result<()> {
    let io_err = |path: &Path, source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            }
            fs::write(path, bytes).map_err(|e| io_err(path, e))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|_| stdout.flush())
                .map_err(|e| io_err(Path::new("<stdout>"), e))
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn run(cli: Cli) -> scriptclique_core::Result<()> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Harvest(args) => {
            let out_dir = out.ok_or_else(|| Error::InvalidArgument("harvest needs --out <DIR>".into()))?;
            let mut cfg = HarvestConfig::new(&args.urls, out_dir);
            cfg.timeout_secs = args.timeout;
            cfg.max_parallel_sites = args.parallel;
            cfg.user_agent = args.user_agent;
            let manifest = harvest(&cfg)?;
            info!(pages = manifest.pages.len(), scripts = manifest.scripts.len(), dir = %out_dir.display(), "corpus written");
        }
        Command::Analyze(args) => {
            let config = load_config(cli.config.as_deref())?;
            let analysis = analyze(&args.corpus, &config, args.rules.as_deref())?;
            if let Some(path) = &args.dump_graph {
                let mut buf = Vec::new();
                analysis.graph.write_edge_csv(&mut buf).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                emit(Some(path), &buf)?;
            }
            let report = &analysis.report;
            info!(
                scripts = report.corpus.n_analyzed,
                edges = analysis.graph.edges.len(),
                cliques = report.cliques.len(),
                "analysis complete"
            );
            emit(out, report.to_json()?.as_bytes())?;
        }
        Command::Calibrate(args) => {
            let config = load_config(cli.config.as_deref())?;
            let labels = match &args.labels {
                Some(p) => load_labels(p)?,
                None => Vec::new(),
            };
            let grid = ThresholdGrid {
                t_min: args.min,
                t_max: args.max,
                step: args.step,
            };
            grid.validate()?;
            let data = load_corpus(&args.corpus)?;
            let rows = sweep(&data, &config, &labels, &grid)?;
            let mut buf = Vec::new();
            write_calibration_csv(&rows, &mut buf).expect("writing to memory");
            emit(out, &buf)?;
        }
        Command::CheckBlocking(args) => {
            let report = CliqueReport::from_file(&args.report)?;
            let mut lists = Vec::with_capacity(args.lists.len());
            for (name, path) in args.lists {
                let text = fs::read(&path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                let parsed = parse_filter_list(&text);
                if !parsed.skipped.is_empty() {
                    warn!(list = %name, skipped = parsed.skipped.len(), "filter lines skipped");
                }
                info!(list = %name, rules = parsed.rules.len(), "filter list loaded");
                lists.push((name, FilterSet::new(parsed.rules)));
            }
            let rows = counterblock_report(&report.cliques, &lists);
            emit(out, counterblock_csv(&rows).as_bytes())?;
        }
        Command::Categorize(args) => {
            let report = CliqueReport::from_file(&args.report)?;
            let path = &args.categories;
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            let table = categorize(&report, &parse_category_map(&text)?);
            let mut s = String::from("category,percent\n");
            for row in &table.rows {
                s.push_str(&format!("{},{:.2}\n", csv_field(&row.category), row.percent));
            }
            s.push_str(&format!(
                "# categorized_sites={} uncategorized_sites={}\n",
                table.categorized_sites, table.uncategorized_sites
            ));
            emit(out, s.as_bytes())?;
        }
        Command::Top(args) => {
            let report = CliqueReport::from_file(&args.report)?;
            let mut s = String::from("rank,clique_id,n_sites,kind,tag,source_fqdns,top_keywords\n");
            for (i, c) in top_cliques(&report, args.k).iter().enumerate() {
                let fqdns: Vec<&str> = c.source_fqdns.iter().map(String::as_str).collect();
                s.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    i + 1,
                    c.clique_id,
                    c.n_sites,
                    c.kind.as_str(),
                    c.tag.as_str(),
                    csv_field(&fqdns.join(";")),
                    csv_field(&c.top_keywords.join(";"))
                ));
            }
            emit(out, s.as_bytes())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = if cli.quiet { Level::WARN } else { Level::INFO };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(level)
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidArgument(_) => ExitCode::from(EXIT_USAGE),
                _ => ExitCode::from(EXIT_DATA),
            }
        }
    }
}
