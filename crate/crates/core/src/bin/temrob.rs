fn main() {
    std::process::exit(temrob::cli::dispatch(std::env::args_os()));
}
