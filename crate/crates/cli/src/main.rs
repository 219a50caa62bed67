fn main() {
    std::process::exit(probekit_cli::cli_main(std::env::args_os()));
}
