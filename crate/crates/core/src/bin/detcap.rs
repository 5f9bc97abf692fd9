fn main() {
    std::process::exit(detcap::cli::main_with_args(std::env::args_os()));
}
