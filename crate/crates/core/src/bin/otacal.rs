fn main() {
    std::process::exit(otacal::cli::cli_main(std::env::args_os()));
}
