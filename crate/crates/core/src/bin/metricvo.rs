fn main() {
    std::process::exit(metricvo::cli::run());
}
