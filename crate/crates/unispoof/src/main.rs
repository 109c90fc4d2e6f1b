fn main() {
    std::process::exit(unispoof::cli::main_with_args(std::env::args_os()));
}
