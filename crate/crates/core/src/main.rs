fn main() -> std::process::ExitCode {
    halluprobe::cli::main()
}
