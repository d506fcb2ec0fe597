fn main() -> std::process::ExitCode {
    dara_cli::main()
}
