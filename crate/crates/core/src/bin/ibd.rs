fn main() {
    std::process::exit(ibd_core::cli::run(std::env::args_os()));
}
