fn main() {
    std::process::exit(prioritizer_cli::run(std::env::args_os()));
}
