fn main() -> std::process::ExitCode {
    splatfix::cli::main()
}
