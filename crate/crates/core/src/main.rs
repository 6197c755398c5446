fn main() {
    std::process::exit(ris_stogeo::cli::main_with_args(std::env::args_os()));
}
