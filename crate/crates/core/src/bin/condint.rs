fn main() {
    std::process::exit(condint::cli::main_with_args(std::env::args_os()));
}
