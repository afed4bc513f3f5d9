fn main() {
    std::process::exit(hu_sdo_cli::run_cli(std::env::args_os()));
}
