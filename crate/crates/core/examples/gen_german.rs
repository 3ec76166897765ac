//! Regenerates the committed credit dataset:
//!
//! ```text
//! cargo run -p sgldkit --example gen_german > data/german_credit_synth.csv
//! ```

use sgldkit::data::{generate_credit_csv, CREDIT_ROWS, CREDIT_SEED};

fn main() {
    print!("{}", generate_credit_csv(CREDIT_ROWS, CREDIT_SEED));
}
