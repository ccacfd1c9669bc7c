fn main() {
    std::process::exit(testmaint::cli::run(std::env::args_os()));
}
