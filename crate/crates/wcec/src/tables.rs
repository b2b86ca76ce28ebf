//! CSV formats: measurement tables, experiment tables and traces.

use std::io::{Read, Write};

use wcec_core::bench::{TableId, TableResult};
use wcec_core::energy::{MeasurementRow, MeasurementTable, Pattern, TraceEvent};

use crate::Error;

/// Reads `instruction,zeros,rand8,rand16,rand24,rand32,signal`. The pattern
/// columns may come in any order but all six are required.
pub fn read_measurements(input: impl Read) -> Result<MeasurementTable, Error> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = r.headers()?.clone();
    if header.get(0) != Some("instruction") {
        return Err(Error::Format("first column must be `instruction`".into()));
    }
    let mut slots = Vec::new();
    for name in header.iter().skip(1) {
        let p: Pattern = name
            .parse()
            .map_err(|_| Error::Format(format!("unknown pattern column `{name}`")))?;
        if slots.contains(&p) {
            return Err(Error::Format(format!("duplicate pattern column `{name}`")));
        }
        slots.push(p);
    }
    if slots.len() != Pattern::ALL.len() {
        return Err(Error::Format("all six pattern columns are required".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let name = rec.get(0).unwrap_or_default();
        let mut power = [0.0; 6];
        for (p, field) in slots.iter().zip(rec.iter().skip(1)) {
            power[p.index()] = field
                .parse()
                .map_err(|_| Error::Format(format!("line {line}: `{field}` is not a number")))?;
        }
        rows.push(MeasurementTable::row(name, power).map_err(|e| Error::Format(format!("line {line}: {e}")))?);
    }
    Ok(MeasurementTable::new(rows)?)
}

pub fn write_measurements(table: &MeasurementTable, out: impl Write) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["instruction"];
    header.extend(Pattern::ALL.iter().map(|p| p.name()));
    w.write_record(&header)?;
    for MeasurementRow { instruction, power_mw, .. } in table.rows() {
        let mut rec = vec![instruction.clone()];
        rec.extend(power_mw.iter().map(|v| format!("{v:.2}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Experiment table with an `instruction` column followed by the table's
/// own columns.
pub fn write_table(table: &TableResult, out: impl Write) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["instruction".to_string()];
    header.extend(table.columns.iter().cloned());
    w.write_record(&header)?;
    for (name, values) in &table.rows {
        let mut rec = vec![name.clone()];
        rec.extend(values.iter().map(|v| format!("{v:.2}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads a table written by [`write_table`].
pub fn read_table(table: TableId, input: impl Read) -> Result<TableResult, Error> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = r.headers()?.clone();
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let values = rec
            .iter()
            .skip(1)
            .map(|f| f.parse::<f64>().map_err(|_| Error::Format(format!("`{f}` is not a number"))))
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != columns.len() {
            return Err(Error::Format("ragged table row".into()));
        }
        rows.push((rec.get(0).unwrap_or_default().to_string(), values));
    }
    Ok(TableResult { table, columns, rows })
}

pub fn write_trace(events: &[TraceEvent], out: impl Write) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cycle", "thread", "site", "opcode", "ports", "switch_bits", "cost_mw", "tainted"])?;
    for e in events {
        let ports: Vec<String> = e.ports.iter().map(|v| format!("{v:#010x}")).collect();
        w.write_record([
            e.cycle.to_string(),
            e.thread.to_string(),
            e.site.to_string(),
            e.opcode.name().to_string(),
            ports.join(";"),
            e.switching_bits.to_string(),
            e.cost_mw.to_string(),
            u8::from(e.tainted_ports != 0).to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Parses input words separated by whitespace or commas, decimal or
/// `0x`-prefixed hex; a leading `-` gives the two's complement word. `#`
/// starts a comment.
pub fn parse_words(text: &str) -> Result<Vec<u32>, Error> {
    let mut words = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let code = line.split('#').next().unwrap_or_default();
        for tok in code.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            let bad = || Error::Format(format!("line {}: `{tok}` is not a word", i + 1));
            let w = if let Some(hex) = tok.strip_prefix("0x").or_else(|| tok.strip_prefix("0X")) {
                u32::from_str_radix(hex, 16).map_err(|_| bad())?
            } else if tok.starts_with('-') {
                tok.parse::<i32>().map_err(|_| bad())? as u32
            } else {
                tok.parse::<u32>().map_err(|_| bad())?
            };
            words.push(w);
        }
    }
    Ok(words)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE: &str = "instruction,zeros,rand8,rand16,rand24,rand32,signal\n\
        maccs,218.79,223.24,228.93,233.65,238.28,234.65\n\
        nops,218.52,219.84,220.83,221.88,223.68,222.41\n";

    #[test]
    fn measurement_round_trip() {
        let t = read_measurements(TABLE.as_bytes()).unwrap();
        let mut out = Vec::new();
        write_measurements(&t, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), TABLE);
    }

    #[test]
    fn columns_may_be_permuted() {
        let text = "instruction,signal,zeros,rand8,rand16,rand24,rand32\nnops,222.41,218.52,219.84,220.83,221.88,223.68\n";
        let t = read_measurements(text.as_bytes()).unwrap();
        assert_eq!(t.rows()[0].power_mw[0], 218.52);
        assert_eq!(t.rows()[0].power_mw[5], 222.41);
    }

    #[test]
    fn bad_tables() {
        let missing = "instruction,zeros,rand8\nnops,1,2\n";
        assert!(read_measurements(missing.as_bytes()).is_err());
        let bad = TABLE.replace("233.65", "x");
        let e = read_measurements(bad.as_bytes()).unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
        let negative = TABLE.replace("233.65", "-1");
        assert!(read_measurements(negative.as_bytes()).is_err());
    }

    #[test]
    fn table_round_trip() {
        let t = TableResult {
            table: TableId::Two,
            columns: vec!["1".into(), "2".into()],
            rows: vec![("add".into(), vec![230.5, 231.25])],
        };
        let mut out = Vec::new();
        write_table(&t, &mut out).unwrap();
        assert_eq!(String::from_utf8(out.clone()).unwrap(), "instruction,1,2\nadd,230.50,231.25\n");
        assert_eq!(read_table(TableId::Two, out.as_slice()).unwrap(), t);
    }

    #[test]
    fn words() {
        assert_eq!(parse_words("1, 0x10 -1 # c\n\n7").unwrap(), [1, 16, u32::MAX, 7]);
        assert!(parse_words("1 two").is_err());
    }
}
