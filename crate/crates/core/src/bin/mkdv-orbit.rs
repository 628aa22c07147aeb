fn main() {
    std::process::exit(mkdv_orbit::io_cli::main_with_args(std::env::args_os()));
}
