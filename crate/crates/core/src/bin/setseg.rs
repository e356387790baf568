fn main() {
    std::process::exit(setseg::cli::main_with_args(std::env::args_os()));
}
