fn main() {
    std::process::exit(coordlab::cli::run());
}
