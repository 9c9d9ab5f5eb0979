fn main() {
    std::process::exit(archpred::cli::run());
}
