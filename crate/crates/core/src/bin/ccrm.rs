fn main() {
    std::process::exit(ccrm::cli::run(std::env::args_os()));
}
