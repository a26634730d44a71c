fn main() {
    std::process::exit(modcap::cli::main_with(std::env::args_os()));
}
