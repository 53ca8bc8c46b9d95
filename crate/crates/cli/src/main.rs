fn main() {
    std::process::exit(gmmamp_cli::run(std::env::args_os().collect()));
}
