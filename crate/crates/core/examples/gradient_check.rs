//! Finite-difference check of the loss gradients and of the whole network.
//!
//! Usage: `gradient_check [seed]`

use asis::selfcheck::gradient_suite;

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let suite = gradient_suite(seed, 8, None);
    print!("{}", suite.summary());
    if !suite.passed() {
        std::process::exit(3);
    }
}
