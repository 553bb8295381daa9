fn main() {
    std::process::exit(sawr_cli::run_cli(std::env::args_os()));
}
