fn main() -> std::process::ExitCode {
    maskgen::cli::main()
}
