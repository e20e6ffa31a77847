fn main() {
    infoot::parallel::init_from_env();
    std::process::exit(infoot::cli::cli_run(std::env::args_os()));
}
