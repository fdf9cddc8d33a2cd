// Copyright 2026 Spinforge Contributors
// SPDX-License-Identifier: Apache-2.0

fn main() {
    std::process::exit(spinforge::cli::main_with_args(std::env::args_os()));
}
