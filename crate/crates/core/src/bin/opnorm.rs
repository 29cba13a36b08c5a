fn main() {
    std::process::exit(opnorm::cli::run(std::env::args_os()));
}
