fn main() {
    std::process::exit(hstream_cli::dispatch(std::env::args_os()));
}
