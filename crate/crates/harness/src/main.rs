fn main() {
    std::process::exit(bidomain_harness::main_with(std::env::args_os()));
}
