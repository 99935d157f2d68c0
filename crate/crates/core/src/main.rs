fn main() {
    std::process::exit(qcrbim::cli::run_from(std::env::args_os()));
}
