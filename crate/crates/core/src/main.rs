fn main() {
    std::process::exit(cuter::cli::run(std::env::args_os()));
}
