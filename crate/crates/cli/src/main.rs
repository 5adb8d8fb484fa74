fn main() {
    std::process::exit(chirpscatter_cli::main_with_args(std::env::args_os()));
}
