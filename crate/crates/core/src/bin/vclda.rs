fn main() {
    std::process::exit(vclda::cli::main_with_args(std::env::args_os()));
}
