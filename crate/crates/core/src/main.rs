fn main() {
    std::process::exit(bsn_aka::cli::main_with_args(std::env::args_os()));
}
