fn main() -> std::process::ExitCode {
    shapeshift::cli::main()
}
