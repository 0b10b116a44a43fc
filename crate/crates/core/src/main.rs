fn main() {
    std::process::exit(cyclecast::cli::run(std::env::args_os()));
}
