fn main() {
    // Placeholder until the CLI module lands.
    eprintln!("bose: not wired up yet");
    std::process::exit(2);
}
