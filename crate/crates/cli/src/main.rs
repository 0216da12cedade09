use clap::Parser;

fn main() {
    qlml_cli::init_threads();
    let cli = qlml_cli::Cli::parse();
    std::process::exit(qlml_cli::run(&cli));
}
