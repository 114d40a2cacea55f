fn main() -> std::process::ExitCode {
    pdhyp::cli::main()
}
