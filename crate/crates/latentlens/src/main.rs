use clap::Parser;

// Exit codes: 0 success, 2 config/usage error, 3 input data error.
fn main() {
    let cli = latentlens::cli::Cli::parse();
    if let Err(e) = latentlens::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(if e.is_usage() { 2 } else { 3 });
    }
}
