fn main() {
    std::process::exit(sde_errlab::cli::main_with_args(std::env::args_os()));
}
