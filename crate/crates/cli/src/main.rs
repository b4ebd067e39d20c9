mod output;

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::mpsc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use skyquery::federation::{remote_skyquery, DEFAULT_HTM_DEPTH};
use skyquery::skysim::{generate, load_catalogs, oracle_crossmatch, write_federation, OracleLimits, SkyConfig};
use skyquery::wire::SocketTransport;
use skyquery::{parse, FedError, FedOptions, FedSpec, Federation, ParseError, TransportKind, WireConfig};

use output::{write_table, Format};

#[derive(Parser)]
#[command(name = "skyquery", version, about = "Federated astronomical cross-match")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Inproc,
    Socket,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic catalogs and ground truth from a TOML config.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Start a portal and its nodes from a federation spec; runs until Ctrl-C.
    Serve {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Send a query to a running portal.
    Query {
        /// Portal address, host:port.
        #[arg(long)]
        portal: String,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        #[arg(long, default_value_t = 600.0)]
        timeout_secs: f64,
        query: String,
    },
    /// Start a throwaway federation over a catalog directory and run one query.
    Run {
        #[arg(long)]
        catalogs: PathBuf,
        #[arg(long, value_enum, default_value = "inproc")]
        transport: TransportArg,
        #[arg(long, default_value_t = skyquery::wire::DEFAULT_MAX_CHUNK)]
        max_chunk: usize,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        /// Print the execution order and per-stage transfer counts to stderr.
        #[arg(long)]
        explain: bool,
        query: String,
    },
    /// Evaluate a query by brute force over a catalog directory.
    Oracle {
        #[arg(long)]
        catalogs: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        /// Largest candidate product the oracle will enumerate.
        #[arg(long, default_value_t = skyquery::skysim::DEFAULT_ORACLE_GUARD)]
        max_product: u128,
        query: String,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<FedError> for Failure {
    fn from(e: FedError) -> Self {
        match e.kind() {
            "SyntaxError" | "SemanticError" => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<ParseError> for Failure {
    fn from(e: ParseError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn emit(table: &skyquery::ResultTable, format: Format) -> Result<(), Failure> {
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    write_table(&mut lock, table, format).and_then(|_| lock.flush()).map_err(runtime)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Gen { config, out, seed } => {
            let mut cfg = SkyConfig::load(&config).map_err(|e| Failure::Usage(e.to_string()))?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let sky = generate(&cfg).map_err(runtime)?;
            for path in write_federation(&out, &sky).map_err(runtime)? {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Serve { spec } => {
            let spec = FedSpec::load(&spec).map_err(|e| Failure::Usage(e.to_string()))?;
            let (tx, rx) = mpsc::channel();
            ctrlc::set_handler(move || {
                let _ = tx.send(());
            })
            .map_err(runtime)?;
            let fed = Federation::from_spec(&spec, |line| {
                println!("{line}");
                let _ = io::stdout().flush();
            })?;
            println!("federation ready: {} nodes", fed.node_endpoints().len());
            let _ = io::stdout().flush();
            let _ = rx.recv();
            eprintln!("shutting down");
            fed.shutdown();
            Ok(())
        }
        Command::Query { portal, format, timeout_secs, query } => {
            if !(timeout_secs.is_finite() && timeout_secs > 0.0) {
                return Err(Failure::Usage("--timeout-secs must be positive".into()));
            }
            let transport = SocketTransport::new(WireConfig::default());
            let table = remote_skyquery(&transport, &portal, &query, Duration::from_secs_f64(timeout_secs))?;
            emit(&table, format)
        }
        Command::Run { catalogs, transport, max_chunk, format, explain, query } => {
            if max_chunk == 0 {
                return Err(Failure::Usage("--max-chunk must be positive".into()));
            }
            let ast = parse(&query)?;
            let cats = load_catalogs(&catalogs, DEFAULT_HTM_DEPTH).map_err(runtime)?;
            let kind = match transport {
                TransportArg::Inproc => TransportKind::Inproc,
                TransportArg::Socket => TransportKind::Socket,
            };
            let wire = WireConfig { max_chunk, ..WireConfig::default() };
            let fed = Federation::local(cats, FedOptions::new(kind, wire))?;
            let (table, plan, prs) = fed.run(&ast, None)?;
            if explain {
                for (stage, n) in plan.stages.iter().rev().zip(&prs.transfers) {
                    let count = stage.count.map(|c| c.to_string()).unwrap_or_else(|| "-".into());
                    eprintln!("{:<12} {:<9?} count={count:<8} out={n}", stage.archive_name, stage.role);
                }
                eprintln!("transferred {} tuples", prs.total_transferred());
            }
            emit(&table, format)
        }
        Command::Oracle { catalogs, format, max_product, query } => {
            let ast = parse(&query)?;
            let cats = load_catalogs(&catalogs, DEFAULT_HTM_DEPTH).map_err(runtime)?;
            let table = oracle_crossmatch(&ast, &cats, &OracleLimits { max_product }).map_err(runtime)?;
            emit(&table, format)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
