fn main() {
    std::process::exit(gazeplane::io::cli::run(std::env::args_os()));
}
