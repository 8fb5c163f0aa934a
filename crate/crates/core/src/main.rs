fn main() {
    std::process::exit(cavitynet::cli::run(std::env::args_os()));
}
