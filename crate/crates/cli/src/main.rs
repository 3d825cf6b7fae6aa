fn main() {
    std::process::exit(codetext::cli::main_with_args(std::env::args_os()));
}
