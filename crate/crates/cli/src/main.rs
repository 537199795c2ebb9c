fn main() {
    std::process::exit(ftdyn_cli::main_with(std::env::args_os()));
}
