fn main() -> std::process::ExitCode {
    gwalign::cli::run()
}
