//! The command-line pipeline end to end in a temporary directory:
//! gen-synthetic, build-dataset, extract-rules, train, evaluate, predict, ablate.
//!
//! cargo run --release --example cli_walkthrough

use nfship::cli::main_with_args;

fn run(args: &[&str]) {
    println!("\n$ nfship {}", args.join(" "));
    let code = main_with_args(std::iter::once("nfship").chain(args.iter().copied()));
    assert_eq!(code, 0, "nfship {args:?} failed");
}

fn main() -> std::io::Result<()> {
    let dir = tempfile::tempdir()?;
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let (raw, data, rules, nf) = (p("raw"), p("data"), p("rules.json"), p("nf.json"));

    run(&["gen-synthetic", "--vessels", "200", "--ais-noise", "1", "--feature-dims", "4x3x3", "--out", &raw]);
    run(&["build-dataset", "--ais", &format!("{raw}/ais.csv"), "--features", &format!("{raw}/images.nff"), "--out", &data, "--min-vessels", "5"]);
    run(&["extract-rules", "--data-dir", &data, "--depth", "4", "--out", &rules]);
    run(&["train", "--data-dir", &data, "--rules", &rules, "--epochs", "3", "--out", &nf]);
    run(&["evaluate", "--data-dir", &data, "--checkpoint", &nf, "--classical", "knn,nb,lr,crisp"]);
    run(&["predict", "--checkpoint", &nf, "--data-dir", &data, "--row", "0", "--explain"]);
    run(&["ablate", "--data-dir", &data, "--depths", "2,4", "--r", "5.4", "--epochs", "1"]);
    Ok(())
}
