//! Parse a rule file, print the AST and the canonical text, and show how
//! parse errors are reported.
//!
//! ```text
//! cargo run --example parse_rules
//! ```

use saifdl::rulelang::{format_rules, parse_rules};

const SOURCE: &str = "\
# one bound rule and one implication rule
rule cap: output[0] <= 4.2 weight 1.0 penalty softplus k=10
rule hot: if feature[0] > 0.8 and feature[1] >= 0.1 then class 1 margin 0.8 weight 3
";

fn main() {
    let rules = parse_rules(SOURCE).expect("example rules are valid");
    for rule in &rules {
        println!("{rule:#?}");
    }
    println!("canonical form:\n{}", format_rules(&rules));

    let reparsed = parse_rules(&format_rules(&rules)).expect("canonical text parses");
    assert_eq!(reparsed, rules);

    for bad in [
        "rule x output[0] < 1",
        "rule x: output[0] < 1 weight -2",
        "rule x: output[0] ~ 1",
    ] {
        match parse_rules(bad) {
            Ok(_) => unreachable!(),
            Err(e) => println!("{bad:?}\n  -> {e} (at {})", e.pos()),
        }
    }
}
