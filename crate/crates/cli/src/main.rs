fn main() {
    std::process::exit(modular_ppt_cli::main_with_args(std::env::args_os()));
}
