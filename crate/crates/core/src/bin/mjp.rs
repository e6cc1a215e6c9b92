fn main() {
    std::process::exit(mjpgibbs::cli::cli_main(std::env::args_os()));
}
