fn main() {
    std::process::exit(debiasfirst_cli::run(std::env::args_os()));
}
