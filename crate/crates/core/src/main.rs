fn main() -> std::process::ExitCode {
    pcf_harmonic::cli::main()
}
