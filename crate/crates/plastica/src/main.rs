fn main() {
    std::process::exit(plastica::cli::main_with_args(std::env::args_os()));
}
