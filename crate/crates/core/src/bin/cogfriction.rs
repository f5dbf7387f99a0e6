fn main() {
    std::process::exit(cogfriction::cli::run(std::env::args_os()));
}
