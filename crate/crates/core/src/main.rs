fn main() {
    std::process::exit(subsym::cli::main_with_args(std::env::args_os()));
}
