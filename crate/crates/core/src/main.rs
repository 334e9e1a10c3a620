fn main() {
    std::process::exit(netmig::cli::dispatch(std::env::args_os()));
}
