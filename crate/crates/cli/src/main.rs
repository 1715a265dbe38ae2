fn main() {
    std::process::exit(conetract_cli::main_entry());
}
