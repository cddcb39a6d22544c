fn main() {
    std::process::exit(das::cli::cli_main());
}
