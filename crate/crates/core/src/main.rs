fn main() {
    std::process::exit(pal::cli::main());
}
