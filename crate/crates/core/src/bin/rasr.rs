fn main() { std::process::exit(rasr::cli::main()) }
