fn main() {
    std::process::exit(cfent::cli::run(std::env::args_os()));
}
