fn main() {
    std::process::exit(fairpol::cli::run(std::env::args_os()));
}
