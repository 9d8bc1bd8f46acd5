use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = ifpacket::Cli::parse();
    match ifpacket::run(cli) {
        Ok(rep) => {
            print!("{}", rep.summary());
            if rep.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
