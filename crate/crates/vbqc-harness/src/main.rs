use clap::Parser;

fn main() {
    let cli = vbqc_harness::cli::Cli::parse();
    if let Err(e) = vbqc_harness::cli::main(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
