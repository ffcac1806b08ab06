fn main() {
    std::process::exit(rloco::cli::run(std::env::args_os()));
}
