fn main() {
    std::process::exit(tgd::harness::cli::main_with_args(std::env::args_os()));
}
