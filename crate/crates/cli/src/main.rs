mod args;
mod run;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use args::Cli;
use run::CliError;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // clap exits 0 for --help/--version and 2 for usage errors.
        Err(e) => e.exit(),
    };
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
        {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match run::run(&cli).and_then(|o| emit(&cli, &o).map(|()| o)) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(note) = &outcome.note {
        eprintln!("{note}");
    }
    ExitCode::from(outcome.status as u8)
}

fn emit(cli: &Cli, outcome: &run::Outcome) -> Result<(), CliError> {
    match &cli.global.out {
        Some(path) => std::fs::write(path, &outcome.text).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(outcome.text.as_bytes())
                .and_then(|()| stdout.flush())
                .map_err(|source| CliError::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}
