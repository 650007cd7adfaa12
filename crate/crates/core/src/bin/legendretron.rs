fn main() {
    std::process::exit(legendretron::cli::run(std::env::args_os()));
}
