fn main() {
    std::process::exit(gridwave::cli::main());
}
