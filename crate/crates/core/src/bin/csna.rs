fn main() -> std::process::ExitCode {
    csna::cli::main()
}
