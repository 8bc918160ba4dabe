use clap::Parser;

fn main() {
    let cli = mmcl::cli::Cli::parse();
    if let Err(e) = mmcl::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(mmcl::cli::exit_code(&e));
    }
}
