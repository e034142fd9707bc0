fn main() -> std::process::ExitCode { atsa::cli::main() }
