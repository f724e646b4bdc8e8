fn main() {
    std::process::exit(banditware::cli::run(std::env::args_os()));
}
