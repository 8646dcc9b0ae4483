use std::io::{self, Write};
use std::process::ExitCode;

use chainfilter_cli::{run, Cli, EXIT_USAGE};
use clap::Parser;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    let stdout = io::stdout();
    let stderr = io::stderr();
    let mut out = stdout.lock();
    let mut err = stderr.lock();
    match run(&cli, &mut out, &mut err) {
        Ok(status) => {
            let _ = out.flush();
            ExitCode::from(status as u8)
        }
        Err(e) => {
            let _ = writeln!(err, "error: {}", e);
            if let Some(hint) = e.hint() {
                let _ = writeln!(err, "hint: {}", hint);
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
