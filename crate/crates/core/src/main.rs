fn main() {
    std::process::exit(rost::cli::main_with_args(std::env::args_os()));
}
