fn main() {
    std::process::exit(stabrad::cli::run(std::env::args_os()));
}
