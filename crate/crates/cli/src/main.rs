fn main() {
    std::process::exit(prae_cli::run());
}
