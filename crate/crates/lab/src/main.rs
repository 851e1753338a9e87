fn main() -> std::process::ExitCode {
    crossing_lab::cli::main()
}
