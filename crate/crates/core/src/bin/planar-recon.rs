fn main() -> std::process::ExitCode {
    planar_recon::cli::main()
}
