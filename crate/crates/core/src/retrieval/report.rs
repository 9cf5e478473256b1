use std::fmt::Write as _;

use super::metrics::EvalReport;
use crate::error::{Error, Result};

pub const TABLE_HEADER: &str = "r-1 r-5 r-10 mAP";
pub const CSV_HEADER: &str = "rank,recognition_rate";
const CSV_MAP_KEY: &str = "mAP";

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedReport {
    pub text: String,
    pub csv: String,
}

/// `r-1 r-5 r-10 mAP` as percentages with two decimals, space separated.
pub fn table_row(report: &EvalReport) -> String {
    let [r1, r5, r10, map] = report.table_values();
    format!("{r1:.2} {r5:.2} {r10:.2} {map:.2}")
}

/// Renders the summary table and the full CMC curve as CSV. The CSV ends
/// with an `mAP,<value>` line; values are written with enough digits to
/// parse back exactly.
pub fn render_report(report: &EvalReport) -> Result<RenderedReport> {
    if report.evaluated == 0 || report.cmc.is_empty() {
        return Err(Error::Validation("cannot render a report with no evaluated queries".into()));
    }
    let mut text = String::new();
    writeln!(text, "{TABLE_HEADER}").unwrap();
    writeln!(text, "{}", table_row(report)).unwrap();
    writeln!(text, "queries evaluated: {}", report.evaluated).unwrap();
    writeln!(text, "queries excluded (no ground truth): {}", report.excluded.len()).unwrap();
    for id in &report.excluded {
        writeln!(text, "  excluded: {id}").unwrap();
    }

    let mut csv = String::new();
    writeln!(csv, "{CSV_HEADER}").unwrap();
    for (i, rate) in report.cmc.iter().enumerate() {
        writeln!(csv, "{},{rate:?}", i + 1).unwrap();
    }
    writeln!(csv, "{CSV_MAP_KEY},{:?}", report.map).unwrap();
    Ok(RenderedReport { text, csv })
}

/// CMC curve and mAP read back from a rendered CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedCsv {
    pub cmc: Vec<f64>,
    pub map: f64,
}

pub fn parse_report_csv(csv_text: &str) -> Result<ParsedCsv> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(csv_text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::format("report CSV", e.to_string()))?;
    if headers.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(Error::format("report CSV", format!("expected header `{CSV_HEADER}`")));
    }
    let mut cmc = Vec::new();
    let mut map = None;
    for record in reader.records() {
        let record = record.map_err(|e| Error::format("report CSV", e.to_string()))?;
        let (key, value) = match (record.get(0), record.get(1)) {
            (Some(k), Some(v)) => (k, v),
            _ => return Err(Error::format("report CSV", "row with fewer than two fields")),
        };
        let value: f64 = value
            .parse()
            .map_err(|_| Error::format("report CSV", format!("bad value `{value}`")))?;
        if key == CSV_MAP_KEY {
            map = Some(value);
            continue;
        }
        let rank: usize = key
            .parse()
            .map_err(|_| Error::format("report CSV", format!("bad rank `{key}`")))?;
        if rank != cmc.len() + 1 {
            return Err(Error::format("report CSV", format!("rank {rank} out of sequence")));
        }
        cmc.push(value);
    }
    let map = map.ok_or_else(|| Error::format("report CSV", "missing mAP line"))?;
    Ok(ParsedCsv { cmc, map })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> EvalReport {
        let mut cmc = vec![0.0; 20];
        for (i, v) in cmc.iter_mut().enumerate() {
            *v = match i + 1 {
                1 => 0.5766,
                2..=4 => 0.7,
                5..=9 => 0.7507,
                _ => 0.8163,
            };
        }
        EvalReport {
            cmc,
            per_query_ap: vec![0.6588],
            map: 0.6588,
            evaluated: 1,
            excluded: Vec::new(),
        }
    }

    #[test]
    fn table_row_formatting() {
        assert_eq!(table_row(&report()), "57.66 75.07 81.63 65.88");
        let text = render_report(&report()).unwrap().text;
        assert!(text.starts_with("r-1 r-5 r-10 mAP\n57.66 75.07 81.63 65.88\n"), "{text}");
    }

    #[test]
    fn csv_round_trip() {
        let r = report();
        let parsed = parse_report_csv(&render_report(&r).unwrap().csv).unwrap();
        assert_eq!(parsed, ParsedCsv { cmc: r.cmc.clone(), map: r.map });
    }

    #[test]
    fn empty_report_is_an_error() {
        let r = EvalReport {
            cmc: Vec::new(),
            per_query_ap: Vec::new(),
            map: 0.0,
            evaluated: 0,
            excluded: Vec::new(),
        };
        assert!(render_report(&r).is_err());
    }

    #[test]
    fn csv_parse_errors() {
        assert!(parse_report_csv("rank,rate\n1,0.5\nmAP,0.5\n").is_err());
        assert!(parse_report_csv("rank,recognition_rate\n1,0.5\n").is_err());
        assert!(parse_report_csv("rank,recognition_rate\n2,0.5\nmAP,0.5\n").is_err());
    }
}
