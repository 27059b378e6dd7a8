fn main() {
    std::process::exit(algebromech::cli::main_with_args(std::env::args_os()));
}
