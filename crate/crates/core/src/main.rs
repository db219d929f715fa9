fn main() {
    std::process::exit(parcon::cli::run_command(std::env::args_os()));
}
