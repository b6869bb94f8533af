//! Flat per-event summary for plotting, regenerable from the record log.

use std::io::{BufRead, BufReader, Read, Write};

use super::regret::RegretRecord;
use crate::error::{Error, Result};

pub const SUMMARY_HEADER: [&str; 5] = ["event", "regret", "cum_regret", "optouts", "energy_kwh"];

/// Writes `event,regret,cum_regret,optouts,energy_kwh`. Failed events keep
/// their row with an empty regret and the carried cumulative value.
pub fn write_summary<W: Write>(records: &[RegretRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SUMMARY_HEADER)?;
    for r in records {
        let failed = r.failure.is_some();
        out.write_record([
            r.event.to_string(),
            if failed {
                String::new()
            } else {
                r.regret.to_string()
            },
            r.cumulative.to_string(),
            r.optouts.to_string(),
            if failed {
                String::new()
            } else {
                r.energy_kwh.to_string()
            },
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a line-delimited record log.
pub fn read_records<R: Read>(r: R) -> Result<Vec<RegretRecord>> {
    let mut records = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RegretRecord = serde_json::from_str(&line)
            .map_err(|e| Error::History(format!("record line {}: {e}", i + 1)))?;
        records.push(rec);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_round_trips_through_records() {
        let recs: Vec<RegretRecord> = (1..=3)
            .map(|m| RegretRecord {
                event: m,
                regret: 0.1 / m as f64,
                cumulative: 0.3 * m as f64,
                online_value: 1.0,
                oracle_value: 0.9,
                optouts: m,
                energy_kwh: 2.0 / 3.0,
                baseline_energy_kwh: vec![(3.0, 0.5)],
                flagged: false,
                solver_warnings: 0,
                failure: (m == 2).then(|| "boom".to_string()),
            })
            .collect();
        let mut log = Vec::new();
        for r in &recs {
            log.extend(serde_json::to_vec(r).unwrap());
            log.push(b'\n');
        }
        let back = read_records(&log[..]).unwrap();
        assert_eq!(back, recs);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_summary(&recs, &mut a).unwrap();
        write_summary(&back, &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("event,regret,cum_regret,optouts,energy_kwh\n"));
        assert!(text.contains("\n2,,0.6,2,\n"));
    }
}
