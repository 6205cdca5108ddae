fn main() {
    std::process::exit(adnet::commands::main_with_args(std::env::args_os()));
}
