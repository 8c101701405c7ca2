fn main() {
    std::process::exit(splateval::cli::run(std::env::args_os()));
}
