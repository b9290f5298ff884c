fn main() {
    std::process::exit(ddcm::cli::run(std::env::args_os()));
}
