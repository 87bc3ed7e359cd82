fn main() {
    std::process::exit(oppq_cli::main_with_args(std::env::args_os()));
}
