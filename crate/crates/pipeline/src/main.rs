fn main() {
    std::process::exit(spev_pipeline::cli::run(std::env::args_os()));
}
