//! Maps physical-activity scores (MET-hours/week) to the six treatment levels.

use realistic_rules::ingest::categorize_met;

fn main() {
    for score in [0.0, 0.5, 10.0, 10.01, 20.0, 35.0, 40.0, 60.0, 60.5, 120.0] {
        println!("{score:>7.2} MET-h/wk -> level {}", categorize_met(score).unwrap());
    }
    match categorize_met(-2.0) {
        Ok(_) => unreachable!(),
        Err(e) => println!("negative score rejected: {e}"),
    }
}
