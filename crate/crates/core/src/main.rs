fn main() {
    std::process::exit(prematch::cli::run(std::env::args_os()));
}
