fn main() -> std::process::ExitCode {
    speedgrid::cli::main_with_args(std::env::args_os())
}
