use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tea_core::persist::DATA_DIR_ENV;
use tea_core::server::{serve_stdio, serve_tcp, DEFAULT_WORKERS};
use tea_core::value::canonical_string;
use tea_core::{ComponentKind, Dispatcher, Error, Map, Tea, Value};

#[derive(Parser)]
#[command(name = "tea", version, about = "Versioned tool, environment and agent registry")]
struct Cli {
    /// Directory holding the manifests.
    #[arg(long, global = true, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Human)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Canonical,
}

#[derive(Subcommand)]
enum Command {
    /// Serve newline-delimited requests.
    Serve {
        /// `stdio` or a socket address such as 127.0.0.1:7070.
        #[arg(long, default_value = "stdio")]
        listen: String,
        #[arg(long, default_value_t = DEFAULT_WORKERS)]
        workers: usize,
    },
    /// Names of the active components of one kind.
    List { kind: String },
    /// Active config of one component.
    Info { kind: String, name: String },
    /// Rendered contract document of one registry.
    Contract { kind: String },
    /// Invokes a tool with a mapping of arguments.
    Invoke {
        tool: String,
        #[arg(long, default_value = "{}")]
        args: String,
    },
    /// Top-k components by description similarity.
    Retrieve {
        kind: String,
        query: String,
        #[arg(short = 'k', default_value_t = 5)]
        k: usize,
    },
    /// Trace records of one session.
    Trace { session_id: String },
    History { kind: String, name: String },
    /// Restores an earlier version as a new patch version.
    Rollback { kind: String, name: String, version: String },
    /// Writes the state to `--to`, or back to the data directory.
    Save {
        #[arg(long)]
        to: Option<PathBuf>,
    },
    /// Reads the state from `--from` and stores it in the data directory.
    Load {
        #[arg(long)]
        from: PathBuf,
    },
    /// Runs any wire op with a mapping of params.
    Call {
        op: String,
        #[arg(long, default_value = "{}")]
        params: String,
    },
}

fn kind_prefix(kind: &str) -> Result<&'static str, Error> {
    Ok(match kind.parse::<ComponentKind>()? {
        ComponentKind::Tool => "tool",
        ComponentKind::Environment => "env",
        ComponentKind::Agent => "agent",
        ComponentKind::Prompt => "prompt",
        ComponentKind::Memory => "memory",
    })
}

fn parse_map(text: &str, what: &str) -> Result<Map, Error> {
    match Value::from_canonical(text)? {
        Value::Map(m) => Ok(m),
        _ => Err(Error::protocol(format!("{what} must be a mapping"))),
    }
}

fn params<const N: usize>(pairs: [(&str, Value); N]) -> Map {
    pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect()
}

fn print(format: Format, op: &str, v: &Value) -> Result<(), Error> {
    if format == Format::Canonical {
        println!("{}", canonical_string(v)?);
        return Ok(());
    }
    match (op, v) {
        (_, Value::Null) => {}
        (_, Value::Text(s)) => println!("{s}"),
        (o, Value::Seq(items)) if o.ends_with(".list") => {
            for i in items {
                match i {
                    Value::Text(s) => println!("{s}"),
                    other => println!("{}", canonical_string(other)?),
                }
            }
        }
        (o, Value::Seq(items)) if o.ends_with("retrieve") => {
            for i in items {
                let name = i.get("name").and_then(Value::as_str).unwrap_or_default();
                let score = i.get("score").and_then(Value::as_f64).unwrap_or_default();
                println!("{score:.4}  {name}");
            }
        }
        _ => println!("{}", serde_json::to_string_pretty(v).map_err(|e| Error::protocol(e.to_string()))?),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    let tea = Tea::new();
    let data_dir = cli.data_dir.clone();
    if let Some(dir) = &data_dir {
        if dir.is_dir() {
            tea.load_dir(dir)?;
        }
    }
    let dispatcher = Dispatcher::with_data_dir(tea.clone(), data_dir.clone());
    let persist = |tea: &Tea| -> Result<(), Error> {
        match &data_dir {
            Some(dir) => tea.save_dir(dir),
            None => Ok(()),
        }
    };

    let (op, p, mutates) = match cli.command {
        Command::Serve { listen, workers } => {
            let out = if listen == "stdio" {
                serve_stdio(&dispatcher, workers).map(|_| ())
            } else {
                serve_tcp(dispatcher, listen.as_str(), workers)
            };
            return out.map_err(|e| Error::protocol(format!("transport: {e}")));
        }
        Command::List { kind } => (format!("{}.list", kind_prefix(&kind)?), Map::new(), false),
        Command::Info { kind, name } => (format!("{}.info", kind_prefix(&kind)?), params([("name", name.into())]), false),
        Command::Contract { kind } => {
            let doc = tea.contract(kind.parse()?);
            match cli.format {
                Format::Human => print!("{}", doc.render()),
                Format::Canonical => println!("{}", canonical_string(&doc)?),
            }
            return Ok(());
        }
        Command::Invoke { tool, args } => {
            let args = parse_map(&args, "--args")?;
            ("tool.invoke".to_owned(), params([("name", tool.into()), ("args", Value::Map(args))]), false)
        }
        Command::Retrieve { kind, query, k } => (
            "retrieve".to_owned(),
            params([("kind", kind.into()), ("query", query.into()), ("k", Value::from(k))]),
            false,
        ),
        Command::Trace { session_id } => ("trace.query".to_owned(), params([("session_id", session_id.into())]), false),
        Command::History { kind, name } => {
            (format!("{}.history", kind_prefix(&kind)?), params([("name", name.into())]), false)
        }
        Command::Rollback { kind, name, version } => (
            "evolve.rollback".to_owned(),
            params([("kind", kind.into()), ("name", name.into()), ("version", version.into())]),
            true,
        ),
        Command::Save { to } => {
            match to.or(data_dir.clone()) {
                Some(dir) => tea.save_dir(&dir)?,
                None => return Err(Error::protocol("save needs --to or a data directory")),
            }
            return Ok(());
        }
        Command::Load { from } => {
            tea.load_dir(&from)?;
            return persist(&tea);
        }
        Command::Call { op, params } => {
            let p = parse_map(&params, "--params")?;
            (op, p, true)
        }
    };
    let v = dispatcher.call(&op, &p)?;
    if mutates {
        persist(&tea)?;
    }
    print(cli.format, &op, &v)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {}", e.kind, e.detail);
            for r in &e.reasons {
                eprintln!("  - {r}");
            }
            ExitCode::from(1)
        }
    }
}
