fn main() {
    std::process::exit(semsyngtn::cli::run(std::env::args_os()));
}
