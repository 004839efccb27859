use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command as Cli};

use noisebait::config::{load_config_file, Command, ExperimentConfig, OUT_DIR_ENV};
use noisebait::runner::{replay, run};
use noisebait::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NONCONVERGENCE: u8 = 3;

fn common_args(cmd: Cli) -> Cli {
    cmd.arg(Arg::new("config").long("config").value_name("PATH").help("key = value file; flags override it"))
        .arg(Arg::new("format").long("format").value_name("csv|json").help("output encoding [default: csv]"))
        .arg(
            Arg::new("out_dir")
                .long("out-dir")
                .value_name("DIR")
                .help(format!("output directory [default: ${OUT_DIR_ENV} or .]")),
        )
        .arg(
            Arg::new("threads")
                .long("threads")
                .value_name("N")
                .value_parser(clap::value_parser!(usize))
                .help("worker threads; 0 uses every core [default: 0]"),
        )
}

fn cli() -> Cli {
    let mut root = Cli::new("noisebait")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Dissemination noise against specification search: payoffs, optima and simulations")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for c in Command::ALL {
        let mut sub = common_args(Cli::new(c.name()).about(c.about()));
        for p in c.params() {
            let default = if p.default.is_empty() { String::new() } else { format!(" [default: {}]", p.default) };
            sub = sub.arg(
                Arg::new(p.key)
                    .long(p.flag())
                    .value_name(p.kind.placeholder())
                    .allow_hyphen_values(true)
                    .help(format!("{}{default}", p.help)),
            );
        }
        root = root.subcommand(sub);
    }
    root.subcommand(
        Cli::new("replay")
            .about("Rerun a manifest and compare output digests")
            .arg(Arg::new("manifest").required(true).value_name("MANIFEST"))
            .arg(Arg::new("out_dir").long("out-dir").value_name("DIR").help("where to write the regenerated files"))
            .arg(
                Arg::new("threads")
                    .long("threads")
                    .value_name("N")
                    .value_parser(clap::value_parser!(usize))
                    .help("worker threads; 0 uses every core [default: 0]"),
            )
            .arg(Arg::new("quiet").long("quiet").action(ArgAction::SetTrue).help("print only mismatches")),
    )
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Domain(_) | Error::Usage(_) | Error::ConfigParse { .. } | Error::Capacity { .. } => EXIT_USAGE,
        Error::NonConvergence { .. } => EXIT_NONCONVERGENCE,
        _ => EXIT_FAILURE,
    }
}

fn resolve(command: Command, m: &ArgMatches) -> Result<ExperimentConfig, Error> {
    let file = match m.get_one::<String>("config") {
        Some(path) => load_config_file(&PathBuf::from(path))?,
        None => BTreeMap::new(),
    };
    let mut flags = BTreeMap::new();
    for key in command.params().iter().map(|p| p.key).chain(["format", "out_dir"]) {
        if let Some(v) = m.get_one::<String>(key) {
            flags.insert(key.to_string(), v.clone());
        }
    }
    ExperimentConfig::resolve(command, &file, &flags)
}

fn run_command(command: Command, m: &ArgMatches) -> Result<u8, Error> {
    let cfg = resolve(command, m)?;
    let threads = m.get_one::<usize>("threads").copied().unwrap_or(0);
    let record = run(&cfg, threads)?;
    for line in &record.output.messages {
        println!("{line}");
    }
    for o in &record.manifest.outputs {
        println!("wrote {}", cfg.out_dir.join(&o.file).display());
    }
    println!("wrote {}", record.manifest_path.display());
    if record.output.failures > 0 {
        eprintln!("error: {} verification check(s) failed", record.output.failures);
        return Ok(EXIT_FAILURE);
    }
    Ok(0)
}

fn run_replay(m: &ArgMatches) -> Result<u8, Error> {
    let manifest = PathBuf::from(m.get_one::<String>("manifest").expect("required"));
    let out_dir = match m.get_one::<String>("out_dir") {
        Some(d) => PathBuf::from(d),
        None => std::env::temp_dir().join(format!("noisebait-replay-{}", std::process::id())),
    };
    let threads = m.get_one::<usize>("threads").copied().unwrap_or(0);
    let report = replay(&manifest, &out_dir, threads)?;
    let quiet = m.get_flag("quiet");
    for f in &report.files {
        if !f.matches() || !quiet {
            println!("{} {}", if f.matches() { "identical" } else { "DIFFERS" }, f.file);
        }
    }
    println!("regenerated into {}", out_dir.display());
    if report.all_match() {
        Ok(0)
    } else {
        eprintln!("error: replay does not reproduce the recorded outputs");
        Ok(EXIT_FAILURE)
    }
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let result =
        if name == "replay" { run_replay(sub) } else { name.parse::<Command>().and_then(|c| run_command(c, sub)) };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
