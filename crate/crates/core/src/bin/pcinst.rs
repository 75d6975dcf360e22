fn main() {
    std::process::exit(pcinst::cli::run(std::env::args_os()));
}
