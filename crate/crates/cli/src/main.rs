fn main() {
    std::process::exit(bitext_cli::dispatch(std::env::args_os()));
}
