//! Loading a Markov chain from JSON and checking it before use: rows must sum
//! to one and the chain must be irreducible and aperiodic.

use fblcrd::markov::MarkovFile;

fn main() {
    let good = include_str!("../data/two_state.json");
    let periodic = r#"{"x_size": 2, "s_size": 1, "xi": [[0, 1], [1, 0]], "d": [[0, 1], [1, 0]]}"#;
    let reducible = r#"{"x_size": 2, "s_size": 1, "xi": [[1, 0], [0.5, 0.5]], "d": [[0, 1], [1, 0]]}"#;
    for (name, text) in [("two_state.json", good), ("periodic", periodic), ("reducible", reducible)] {
        match MarkovFile::parse(text).and_then(|f| f.into_model()) {
            Ok(m) => println!("{name}: {} states, π = {:?}", m.states(), m.pi),
            Err(e) => println!("{name}: rejected ({e})"),
        }
    }
}
