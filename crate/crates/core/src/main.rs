fn main() {
    std::process::exit(hardsphere::cli::run(std::env::args_os()));
}
