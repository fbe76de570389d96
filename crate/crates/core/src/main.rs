fn main() {
    std::process::exit(netpulse::cli::main_with_args(std::env::args_os()));
}
