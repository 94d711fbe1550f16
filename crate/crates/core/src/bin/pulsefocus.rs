fn main() {
    std::process::exit(pulsefocus::cli::run(std::env::args_os()));
}
