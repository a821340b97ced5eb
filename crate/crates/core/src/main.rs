fn main() {
    let code = vilab::cli::main_with_args(std::env::args_os(), &mut std::io::stdout());
    std::process::exit(code);
}
