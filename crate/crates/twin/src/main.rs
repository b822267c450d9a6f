fn main() -> std::process::ExitCode {
    chaintwin::cli::main()
}
