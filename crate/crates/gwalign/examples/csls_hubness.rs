//! CSLS versus plain nearest-neighbor retrieval on a hub configuration.
//!
//! In high-dimensional embedding spaces a few "hub" vectors end up being
//! the nearest neighbor of a disproportionate share of queries, which
//! wrecks translation retrieval. Cross-domain similarity local scaling
//! (Conneau et al. 2018) corrects for this by subtracting from each raw
//! cosine the mean similarity of each endpoint to its own nearest
//! neighborhood, penalizing points that are close to everything.
//!
//! This example constructs the failure in 2-D where it can be drawn:
//! three source directions whose true matches are spread out, plus one
//! central target that plain NN prefers for most sources. CSLS recovers
//! the correct assignment.
//!
//! Run with: cargo run --example csls_hubness

use gwalign::retrieval::{csls_translate, nn_translate, TranslationTable};
use gwalign::EmbeddingMatrix;
use ndarray::Array2;

/// Unit vectors at the given angles (degrees), labeled by `names`.
fn angle_embedding(names: &[&str], degrees: &[f64]) -> EmbeddingMatrix {
    let mut m = Array2::zeros((2, degrees.len()));
    for (i, deg) in degrees.iter().enumerate() {
        let rad = deg.to_radians();
        m[[0, i]] = rad.cos();
        m[[1, i]] = rad.sin();
    }
    EmbeddingMatrix::new(names.iter().map(|s| s.to_string()).collect(), m).unwrap()
}

fn show(label: &str, table: &TranslationTable, truth: &[&str]) -> usize {
    let mut correct = 0;
    println!("{label}");
    for (i, entry) in table.entries().iter().enumerate() {
        let (word, score) = &entry.candidates[0];
        let ok = word == truth[i];
        correct += ok as usize;
        println!("    {} -> {word:<8} score {score:+.4}  {}", entry.source, if ok { "ok" } else { "MISS" });
    }
    println!("    {correct}/{} correct", truth.len());
    correct
}

fn main() -> Result<(), gwalign::Error> {
    // True matches: s0 <-> t0, s1 <-> t1, s2 <-> t2. The hub t1 sits at
    // 40 degrees, within 40 degrees of every source; the true matches of
    // s0 and s2 are 50 degrees away, so raw cosine prefers the hub.
    let sources = angle_embedding(&["s0", "s1", "s2"], &[0.0, 40.0, 80.0]);
    let targets = angle_embedding(&["t0", "t1", "t2"], &[-50.0, 40.0, 130.0]);
    let truth = ["t0", "t1", "t2"];

    let nn = nn_translate(&sources, &targets, 1)?;
    let nn_correct = show("plain nearest neighbor:", &nn, &truth);
    let hub_receivers = nn
        .entries()
        .iter()
        .filter(|e| e.candidates[0].0 == "t1")
        .count();

    let csls = csls_translate(&sources, &targets, 1, 1)?;
    let csls_correct = show("CSLS (neighborhood = 1):", &csls, &truth);

    println!("hub effect: NN sends {hub_receivers} of 3 sources to the hub; CSLS recovers {csls_correct} of 3");
    assert!(hub_receivers >= 2 && nn_correct <= 1, "the fixture should fool plain NN");
    assert_eq!(csls_correct, 3, "local scaling should undo the hub");
    Ok(())
}
