fn main() {
    std::process::exit(tmk_cli::main_with_args(std::env::args_os()));
}
