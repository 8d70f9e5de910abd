fn main() {
    std::process::exit(elicitd::cli::main())
}
