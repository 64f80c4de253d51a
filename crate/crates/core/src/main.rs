fn main() {
    std::process::exit(breathline::cli::run(std::env::args_os()));
}
