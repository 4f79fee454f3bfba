fn main() {
    std::process::exit(neumedia::cli::run(std::env::args_os()));
}
