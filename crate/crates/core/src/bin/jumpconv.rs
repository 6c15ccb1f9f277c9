fn main() {
    env_logger::init();
    std::process::exit(jumpconv::cli::run(std::env::args_os()));
}
