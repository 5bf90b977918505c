fn main() {
    std::process::exit(gigan::cli::main_with_args(std::env::args_os()));
}
