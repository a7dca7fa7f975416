fn main() {
    std::process::exit(lexsup::cli::main_with_args(std::env::args_os()));
}
