fn main() {
    std::process::exit(hetmed::cli::run(std::env::args_os()));
}
