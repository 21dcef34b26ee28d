fn main() {
    std::process::exit(autoeval::cli::run(std::env::args_os()));
}
