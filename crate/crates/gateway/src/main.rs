fn main() -> std::process::ExitCode {
    componenthub_gateway::cli::main()
}
