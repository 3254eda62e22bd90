fn main() {
    std::process::exit(uhrseg::cli::run(std::env::args_os()));
}
