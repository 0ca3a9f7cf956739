fn main() {
    std::process::exit(privlink::cli::dispatch(std::env::args().collect()));
}
