//! Runs every acceptance criterion at full size and prints one line each.

use std::process::ExitCode;

use peerfx::acceptance::{run, AcceptOptions};

fn main() -> ExitCode {
    let work = tempfile::tempdir().expect("scratch directory");
    let opts = AcceptOptions { work_dir: work.path().to_path_buf(), ..AcceptOptions::default() };
    let results = run(&opts);
    println!();
    for c in &results {
        println!("{}", c.line());
    }
    let failed = results.iter().filter(|c| !c.passed).count();
    println!("\nacceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
