fn main() {
    std::process::exit(corridors::cli::main_with_args(std::env::args_os()));
}
