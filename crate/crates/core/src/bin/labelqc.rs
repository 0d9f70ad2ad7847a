fn main() -> std::process::ExitCode {
    labelqc::cli::main()
}
