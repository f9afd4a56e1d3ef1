fn main() {
    std::process::exit(solarcast::cli::dispatch(std::env::args_os()));
}
