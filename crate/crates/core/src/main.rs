fn main() {
    std::process::exit(hybrid_infer::run());
}
