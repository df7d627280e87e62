use clap::Parser;
use pe_align_cli::{run, Cli, Status};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Status::Success) => {}
        Ok(s @ Status::ChecksFailed(_)) => {
            if let Status::ChecksFailed(msg) = &s {
                eprintln!("check failed: {msg}");
            }
            std::process::exit(s.exit_code());
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
