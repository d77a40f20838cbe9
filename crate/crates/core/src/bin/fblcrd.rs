fn main() {
    std::process::exit(fblcrd::cli::main_with_args(std::env::args_os()));
}
