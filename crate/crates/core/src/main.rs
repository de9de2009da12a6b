fn main() {
    std::process::exit(dasddp::harness::cli_main(std::env::args_os()));
}
