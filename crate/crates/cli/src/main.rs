use clap::Parser;

fn main() {
    let cli = hplmm_cli::cli::Cli::parse();
    std::process::exit(hplmm_cli::cli::execute(cli));
}
