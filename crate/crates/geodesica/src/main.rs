fn main() { std::process::exit(geodesica::cli::run()); }
