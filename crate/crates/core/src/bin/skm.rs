fn main() {
    std::process::exit(bregman_skm::cli::main_with_args(std::env::args_os()));
}
