fn main() {
    std::process::exit(semsin::cli::run(std::env::args_os()));
}
