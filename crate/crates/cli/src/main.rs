mod args;
mod commands;
mod error;
mod manifest;

use args::Command;
use error::CliError;
use semreg::registration::with_threads;

/// Writes to stdout, ignoring a closed pipe.
pub(crate) fn emit(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{}", text.trim_end());
}

fn dispatch(cli: args::Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Register(a) => {
            let n = a.threads.threads;
            with_threads(n, || commands::register::run(&a, rayon::current_num_threads()))
        }
        Command::Eval(a) => {
            let text = with_threads(a.threads.threads, || commands::eval::run(&a))?;
            emit(&text);
            Ok(())
        }
        Command::OracleFlow(a) => with_threads(a.threads.threads, || commands::oracle::run(&a)),
        Command::Gradcheck(a) => {
            let text = with_threads(a.threads.threads, || commands::gradcheck::run(&a))?;
            emit(&text);
            Ok(())
        }
    }
}

fn main() {
    let result = args::parse(std::env::args().collect()).and_then(dispatch);
    match result {
        Ok(()) => {}
        Err(CliError::Usage(e)) => e.exit(),
        Err(e) => {
            eprintln!("{}", e.to_json());
            std::process::exit(e.exit_code());
        }
    }
}
