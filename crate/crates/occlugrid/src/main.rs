use clap::error::ErrorKind;
use clap::Parser;

use occlugrid::cli::{execute, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            // First line machine-parsable, the rest of clap's message after.
            let rendered = e.render().to_string();
            let mut lines = rendered.lines();
            let first = lines
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("E_USAGE: {first}");
            for line in lines {
                eprintln!("{line}");
            }
            std::process::exit(2);
        }
    };
    if let Err(e) = execute(cli) {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
