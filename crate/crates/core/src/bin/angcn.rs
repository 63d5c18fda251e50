fn main() {
    std::process::exit(angcn::cli::run(std::env::args_os()));
}
