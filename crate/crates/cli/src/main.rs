fn main() {
    std::process::exit(backheat_cli::run(std::env::args_os()));
}
