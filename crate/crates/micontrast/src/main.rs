fn main() {
    std::process::exit(micontrast::cli::run(std::env::args_os()));
}
