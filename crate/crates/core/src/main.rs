fn main() -> std::process::ExitCode {
    bayal::cli::main()
}
