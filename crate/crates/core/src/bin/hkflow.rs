fn main() {
    std::process::exit(hkflow::cli::main_with(std::env::args_os()));
}
