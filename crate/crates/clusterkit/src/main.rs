fn main() {
    std::process::exit(clusterkit::run(std::env::args_os()));
}
