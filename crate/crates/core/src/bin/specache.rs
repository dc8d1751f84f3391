fn main() {
    std::process::exit(specache::cli::main());
}
