fn main() {
    std::process::exit(gp_rvm::cli::main_with_args(std::env::args_os()));
}
