fn main() {
    std::process::exit(vgstein_cli::dispatch(std::env::args_os()));
}
