fn main() {
    std::process::exit(irls_kbr::cli::main_with_args(std::env::args_os()));
}
