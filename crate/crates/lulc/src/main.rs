fn main() {
    std::process::exit(lulc::cli::run_from(std::env::args_os()));
}
