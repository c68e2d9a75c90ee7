fn main() {
    std::process::exit(retlab::cli::dispatch(std::env::args_os()));
}
