use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = dictdis::Cli::parse();
    match dictdis::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.category());
            ExitCode::FAILURE
        }
    }
}
