fn main() {
    std::process::exit(facefit::cli::main());
}
