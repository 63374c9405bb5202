fn main() -> std::process::ExitCode {
    dsex::cli::main()
}
