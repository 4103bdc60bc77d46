fn main() {
    std::process::exit(ffcnet_cli::main_with_args(std::env::args_os()));
}
