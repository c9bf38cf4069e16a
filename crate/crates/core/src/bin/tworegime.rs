fn main() {
    std::process::exit(tworegime::cli::main_from_args(std::env::args_os()));
}
