//! Writes a synthetic dataset as CSV for trying out the command line tool.
//!
//! ```text
//! cargo run --example synthetic_csv -- design 1 300 0.3 42 > d1.csv
//! cargo run --example synthetic_csv -- groups 2000 0.7 42 > groups.csv
//! ```

use hazrisk::censoring::{calibrate_censoring, DEFAULT_TOLERANCE};
use hazrisk::design::{generate_replication, DesignId, DesignSpec};
use hazrisk::groups::generate_two_group;
use hazrisk::study::replication_rng;

fn arg<T: std::str::FromStr>(args: &[String], k: usize, name: &str) -> T {
    args.get(k).and_then(|s| s.parse().ok()).unwrap_or_else(|| panic!("argument {k} ({name}) missing or invalid"))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let mut w = csv::Writer::from_writer(std::io::stdout());
    match args.get(1).map(String::as_str) {
        Some("design") => {
            let id = DesignId::from_number(arg(&args, 2, "design")).ok_or("design must be 1, 2 or 3")?;
            let n: usize = arg(&args, 3, "n");
            let censoring: f64 = arg(&args, 4, "censoring");
            let seed: u64 = arg(&args, 5, "seed");
            let design = DesignSpec::new(id);
            let scale = (censoring > 0.0).then(|| calibrate_censoring(&design, censoring, DEFAULT_TOLERANCE)).transpose()?;
            let data = generate_replication(&design, n, scale, &mut replication_rng(seed, 0))?;
            w.write_record(["x", "time", "status"])?;
            for s in data.samples() {
                w.write_record([s.covariate.to_string(), s.time.to_string(), (s.event as u8).to_string()])?;
            }
        }
        Some("groups") => {
            let n: usize = arg(&args, 2, "n");
            let rho: f64 = arg(&args, 3, "rho");
            let seed: u64 = arg(&args, 4, "seed");
            let data = generate_two_group(n, rho, Some(3.0), &mut replication_rng(seed, 0))?;
            w.write_record(["x", "time", "status", "group"])?;
            for s in data.samples() {
                let g = s.group.unwrap_or_default();
                w.write_record([s.covariate.to_string(), s.time.to_string(), (s.event as u8).to_string(), g.to_string()])?;
            }
        }
        _ => return Err("usage: synthetic_csv design <1|2|3> <n> <censoring> <seed> | groups <n> <rho> <seed>".into()),
    }
    w.flush()?;
    Ok(())
}
