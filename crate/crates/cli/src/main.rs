use clap::Parser;
use cyclecirc_cli::args::Cli;

fn main() {
    let cli = Cli::parse();
    let code = match cyclecirc_cli::run(cli) {
        Ok(v) => v.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    };
    std::process::exit(code);
}
