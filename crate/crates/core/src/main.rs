fn main() {
    std::process::exit(melonqa::cli::run(std::env::args_os()));
}
