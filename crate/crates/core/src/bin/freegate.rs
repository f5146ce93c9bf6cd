fn main() {
    std::process::exit(freegate::cli::main_with_args(std::env::args_os()));
}
