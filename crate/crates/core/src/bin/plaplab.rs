fn main() {
    std::process::exit(plaplab::cli::main(std::env::args_os()));
}
