fn main() {
    std::process::exit(holonomic_cli::run(std::env::args_os()));
}
