fn main() {
    std::process::exit(survfair_cli::run(std::env::args_os()));
}
