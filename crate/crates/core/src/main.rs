fn main() {
    std::process::exit(dtn_waveguide::cli::run_from(std::env::args_os()));
}
