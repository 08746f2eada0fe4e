fn main() {
    std::process::exit(pca_phasefield::cli::main_with(std::env::args_os()));
}
