fn main() {
    std::process::exit(moiso::cli::run(std::env::args_os()));
}
