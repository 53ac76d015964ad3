fn main() {
    let code = carnot::cli::run(std::env::args().collect());
    std::process::exit(code);
}
