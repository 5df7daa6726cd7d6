fn main() {
    std::process::exit(additivity::cli::run());
}
