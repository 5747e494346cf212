fn main() {
    std::process::exit(sacon::cli::main_with_args(std::env::args_os()));
}
