fn main() {
    std::process::exit(mobidiff::cli::main_with_args(std::env::args_os()));
}
