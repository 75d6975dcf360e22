//! The `pcinst` command line: `gen`, `train`, `segment`, `evaluate`, `bench`
//! and `sweep`.
//!
//! Every subcommand reads defaults, then an optional `--config` file of
//! `key = value` lines, then `--key value` flags. `--print-config` prints the
//! resolved configuration and exits. Each run writes `<out>.manifest`, a
//! config file that reproduces it.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

mod commands;
mod config;

pub use commands::Subcommand;
pub use config::{ParamSpec, RunConfig};

use std::ffi::OsString;
use std::io::Write;

use clap::parser::ValueSource;
use clap::{Arg, ArgAction, Command};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(crate::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        match e {
            crate::Error::InvalidConfig(m) | crate::Error::InvalidSpec(m) => CliError::Usage(m),
            other => CliError::Data(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.into())
    }
}

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

/// The clap command tree, one flag per configuration key.
pub fn command() -> Command {
    let mut root = Command::new("pcinst")
        .about("Point-cloud instance segmentation toolkit")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true);
    for sub in Subcommand::ALL {
        let mut c = Command::new(sub.name())
            .about(sub.about())
            .arg(Arg::new("config").long("config").value_name("FILE").help("key = value config file"))
            .arg(
                Arg::new("print-config")
                    .long("print-config")
                    .action(ArgAction::SetTrue)
                    .help("print the resolved configuration and exit"),
            );
        for spec in sub.params() {
            let mut arg = Arg::new(spec.key)
                .long(flag_name(spec.key))
                .value_name("VALUE")
                .help(format!("{} [default: {}]", spec.help, spec.default));
            if spec.key.contains('_') {
                arg = arg.alias(spec.key);
            }
            c = c.arg(arg);
        }
        root = root.subcommand(c);
    }
    root
}

/// Resolves the configuration of a parsed subcommand.
fn resolve(sub: Subcommand, m: &clap::ArgMatches) -> Result<RunConfig, CliError> {
    let mut cfg = sub.defaults();
    if let Some(path) = m.get_one::<String>("config") {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {path}: {e}")))?;
        cfg.apply_text(&text)?;
    }
    for spec in sub.params() {
        if m.value_source(spec.key) == Some(ValueSource::CommandLine) {
            let v = m.get_one::<String>(spec.key).expect("value present");
            cfg.set(spec.key, v)?;
        }
    }
    Ok(cfg)
}

/// Runs the command line `args` (program name first) and returns the exit
/// code. Results go to `stdout`, diagnostics to `stderr`.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let out: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(out, "{}", e.render());
            return code;
        }
    };
    let (name, sub_m) = matches.subcommand().expect("subcommand is required");
    let sub = Subcommand::ALL
        .into_iter()
        .find(|s| s.name() == name)
        .expect("clap only accepts declared subcommands");

    let result = resolve(sub, sub_m).and_then(|cfg| {
        if sub_m.get_flag("print-config") {
            write!(stdout, "{cfg}")?;
            Ok(())
        } else {
            commands::execute(sub, &cfg, stdout)
        }
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

/// [`run_with`] on the process's standard streams.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_with(std::iter::once("pcinst").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn command_tree_is_consistent() {
        command().debug_assert();
    }

    #[test]
    fn print_config_shows_defaults_and_overrides() {
        let (code, out, _) = run_capture(&["gen", "--seed", "7", "--print-config"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.starts_with("# pcinst gen\n"));
        assert!(out.contains("seed = 7\n"));
        assert!(out.contains("noise_sigma = 0.05\n"));
    }

    #[test]
    fn underscore_alias_is_accepted() {
        let (code, out, _) = run_capture(&["train", "--total_steps", "5", "--print-config"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("total_steps = 5\n"));
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_capture(&["gen", "--colour", "red"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["fly"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&[]).0, EXIT_USAGE);
        let (code, _, err) = run_capture(&["gen", "--seed", "x"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("seed"));
        assert_eq!(run_capture(&["train"]).0, EXIT_USAGE);
    }

    #[test]
    fn missing_input_is_a_data_error() {
        let (code, _, _) = run_capture(&["evaluate", "--gt", "/nonexistent/a", "--pred", "/nonexistent/b"]);
        assert_eq!(code, EXIT_DATA);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run_capture(&["--help"]).0, EXIT_OK);
    }
}
