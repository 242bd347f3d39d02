fn main() {
    std::process::exit(kthprice::cli::run());
}
