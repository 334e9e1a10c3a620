//! One projection step by hand: rates to counts, age/sex disaggregation,
//! the zero-sum correction and reaggregation back to rates.
//!
//!     cargo run --example zero_sum_correction

use std::collections::BTreeMap;

use netmig::data::{counts_from_rates, CellKey, MigrationSchedule, ScheduleSet};
use netmig::projector::{disaggregate, reaggregate, zero_sum_correct};

fn schedule(code: &str, young: f64) -> MigrationSchedule {
    let mut cells = BTreeMap::new();
    cells.insert(CellKey::new("0-39", "both"), young);
    cells.insert(CellKey::new("40+", "both"), 1.0 - young);
    MigrationSchedule { country_code: code.into(), cells }
}

fn main() -> netmig::Result<()> {
    let codes: Vec<String> = ["DEU", "MEX", "USA"].map(String::from).to_vec();
    // thousands of people
    let pops = [82_000.0, 110_000.0, 300_000.0];
    // net migrants per thousand per year
    let rates = [2.5, -4.0, 3.0];
    let schedules = ScheduleSet::new(vec![
        schedule("DEU", 0.7),
        schedule("MEX", 0.8),
        schedule("USA", 0.6),
    ])?;

    let counts = counts_from_rates(&rates, &pops)?;
    println!("net migrants per year: {counts:?}, world sum {:.0}", counts.iter().sum::<f64>());

    let cells = disaggregate(&counts, &codes, &schedules)?;
    let fixed = zero_sum_correct(&cells, &pops)?;
    for (k, key) in schedules.cell_keys().iter().enumerate() {
        println!(
            "cell {:<5} sum before {:>10.1}  after {:>6.1e}",
            key.age_group,
            cells.cell_total(k),
            fixed.cell_total(k)
        );
    }

    let corrected = reaggregate(&fixed, &pops)?;
    for (c, code) in codes.iter().enumerate() {
        println!("{code}: {:>6.3} -> {:>6.3}", rates[c], corrected[c]);
    }
    Ok(())
}
