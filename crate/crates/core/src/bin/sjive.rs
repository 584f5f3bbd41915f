fn main() {
    std::process::exit(sjive::cli::run(std::env::args_os()));
}
