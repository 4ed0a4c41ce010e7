fn main() {
    std::process::exit(atlas_core::cli::cli_main(std::env::args_os()));
}
