use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use clap::Parser;
use weaklabel_cli::{execute, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let stdin = io::stdin();
    let mut input = stdin.lock();
    let mut prompt = io::stderr();
    match execute(cli, &mut input, &mut prompt) {
        Ok(log) => {
            let mut out = BufWriter::new(io::stdout().lock());
            for line in log {
                let _ = writeln!(out, "{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
