fn main() {
    std::process::exit(leaky_dlms::cli::main_with_args(std::env::args_os()));
}
