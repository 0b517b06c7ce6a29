fn main() {
    std::process::exit(neurosym::harness::cli::main_with(std::env::args_os()));
}
