fn main() {
    std::process::exit(dipole_mirror::cli::main_with_args(std::env::args_os()));
}
