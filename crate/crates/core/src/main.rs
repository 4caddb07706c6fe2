fn main() {
    std::process::exit(lineartist::cli::run(std::env::args_os()));
}
