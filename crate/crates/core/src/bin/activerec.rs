fn main() {
    std::process::exit(activerec::harness::cli::main_with_args(std::env::args_os()));
}
