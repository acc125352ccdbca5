fn main() {
    std::process::exit(srocket::cli::run(std::env::args_os()));
}
