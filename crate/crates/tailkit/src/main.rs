fn main() {
    std::process::exit(tailkit::cli::run(std::env::args_os()));
}
