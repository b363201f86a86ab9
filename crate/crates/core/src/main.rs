fn main() {
    std::process::exit(pfikit::cli::run_from(std::env::args_os()));
}
