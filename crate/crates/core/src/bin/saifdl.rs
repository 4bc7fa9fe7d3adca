fn main() {
    std::process::exit(saifdl::cli::main());
}
