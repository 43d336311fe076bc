fn main() {
    std::process::exit(stepchev::cli::main_from_args(std::env::args_os()));
}
