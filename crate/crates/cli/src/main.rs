fn main() {
    std::process::exit(abyss_cli::run(std::env::args_os()));
}
