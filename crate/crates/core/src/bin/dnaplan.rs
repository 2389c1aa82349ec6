fn main() {
    std::process::exit(dnaplan::cli::run(std::env::args_os()));
}
