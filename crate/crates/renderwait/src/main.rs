fn main() {
    std::process::exit(renderwait::cli::run(std::env::args_os()));
}
