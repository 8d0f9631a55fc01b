use clap::Parser;

fn main() {
    let cli = pyrotune::cli::Cli::parse();
    std::process::exit(pyrotune::cli::main_with(cli));
}
