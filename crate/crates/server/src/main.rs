use std::collections::HashMap;

fn main() {
    let env: HashMap<String, String> = std::env::vars().collect();
    let code = infomorph_server::cli::run(std::env::args_os().collect(), &env, &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
