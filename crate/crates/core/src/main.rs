fn main() {
    std::process::exit(glmm_smc::cli::main_with_args(std::env::args_os()));
}
