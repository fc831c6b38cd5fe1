fn main() {
    std::process::exit(procmem::cli::run_cli(std::env::args_os()));
}
