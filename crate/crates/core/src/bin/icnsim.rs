// SPDX-License-Identifier: Apache-2.0

use std::io;

fn main() {
    icnsim::cli::init_logging();
    let code = icnsim::cli::run_cli(std::env::args_os(), &mut io::stdout().lock(), &mut io::stderr().lock());
    std::process::exit(code);
}
