//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! `DHSQR_ACCEPTANCE_FAST=1` limits the run to criteria 1–7 and
//! `DHSQR_ACCEPTANCE_REPLICATES` overrides the Monte Carlo replicate count
//! (10 by default).

use dhsqr_harness::verify::{run_all, VerifyOptions};

fn main() {
    // libtest flags such as --list or a name filter are accepted and ignored,
    // except that listing must not run anything.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut opts = VerifyOptions {
        fast: std::env::var("DHSQR_ACCEPTANCE_FAST").is_ok_and(|v| v == "1"),
        ..VerifyOptions::default()
    };
    if let Some(r) = std::env::var("DHSQR_ACCEPTANCE_REPLICATES")
        .ok()
        .and_then(|v| v.parse().ok())
    {
        opts.replicates = r;
    }
    println!(
        "acceptance suite ({} replicates per Monte Carlo cell)",
        opts.replicates
    );
    let results = run_all(opts, |r| println!("{r}"));
    let failed: Vec<u8> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        results.len() - failed.len(),
        failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(" ({failed:?})")
        }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
