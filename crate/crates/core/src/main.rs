fn main() {
    std::process::exit(snp::cli::main_with_args(std::env::args_os()));
}
