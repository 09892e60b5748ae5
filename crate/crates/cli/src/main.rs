fn main() {
    std::process::exit(vernqa_cli::run(std::env::args_os()));
}
