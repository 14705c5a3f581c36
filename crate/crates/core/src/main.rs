fn main() {
    std::process::exit(tedfam::cli::run(std::env::args_os()));
}
