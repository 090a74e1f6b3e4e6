fn main() {
    std::process::exit(nfship::cli::main_with_args(std::env::args_os()));
}
