fn main() {
    std::process::exit(qubit_aopt::cli::run(std::env::args_os()));
}
