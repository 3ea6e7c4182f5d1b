fn main() {
    std::process::exit(imblab::cli::run(std::env::args_os()));
}
