//! Reading draws from CSV and writing reports.
//!
//! LONG layout: one row per (chain, draw), columns `chain`, `draw`, then one
//! column per parameter. WIDE_PER_PARAM layout: one file per parameter, one
//! column per chain, one row per draw.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::chain_core::{DiagnosticsReport, DrawsMatrix, NonFinitePolicy};
use crate::error::{DiagError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Layout {
    #[default]
    Long,
    WidePerParam,
}

impl FromStr for Layout {
    type Err = DiagError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "long" => Ok(Layout::Long),
            "wide" | "wide-per-param" => Ok(Layout::WidePerParam),
            _ => Err(DiagError::InvalidArgument(format!("unknown layout `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DrawsFileFormat {
    pub layout: Layout,
    pub delimiter: u8,
    pub has_header: bool,
    pub nonfinite: NonFinitePolicy,
}

impl Default for DrawsFileFormat {
    fn default() -> Self {
        Self {
            layout: Layout::Long,
            delimiter: b',',
            has_header: true,
            nonfinite: NonFinitePolicy::Reject,
        }
    }
}

fn open(path: &Path) -> Result<Box<dyn Read>> {
    if path == Path::new("-") {
        return Ok(Box::new(io::stdin().lock()));
    }
    let f = File::open(path).map_err(|source| DiagError::File {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(Box::new(BufReader::new(f)))
}

/// Reads draws from `path` (`-` for stdin). A WIDE_PER_PARAM file holds a
/// single parameter named after the file stem.
pub fn read_draws<T: Scalar>(path: &Path, format: &DrawsFileFormat) -> Result<DrawsMatrix<T>> {
    let reader = open(path)?;
    match format.layout {
        Layout::Long => parse_long(reader, format),
        Layout::WidePerParam => parse_wide(reader, &param_name(path), format),
    }
}

/// Reads one WIDE_PER_PARAM file per parameter into a single matrix.
pub fn read_draws_wide<T: Scalar>(
    paths: &[PathBuf],
    format: &DrawsFileFormat,
) -> Result<DrawsMatrix<T>> {
    let mut names = Vec::with_capacity(paths.len());
    let mut data = Vec::with_capacity(paths.len());
    for path in paths {
        let name = param_name(path);
        let m = parse_wide::<T, _>(open(path)?, &name, format)?;
        if let Some(first) = data.first() {
            let first: &Vec<Vec<T>> = first;
            if first.len() != m.chains() || first[0].len() != m.iterations() {
                return Err(DiagError::InvalidArgument(format!(
                    "{}: {} chains x {} draws, expected {} x {}",
                    path.display(),
                    m.chains(),
                    m.iterations(),
                    first.len(),
                    first[0].len()
                )));
            }
        }
        data.push((0..m.chains()).map(|c| m.chain(0, c).to_vec()).collect());
        names.push(name);
    }
    DrawsMatrix::from_parameters_with(names, data, format.nonfinite)
}

fn param_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "x".to_string())
}

fn csv_reader<R: Read>(reader: R, format: &DrawsFileFormat) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(reader)
}

fn parse_err(line: u64, message: impl Into<String>) -> DiagError {
    DiagError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_value(field: &str, line: u64) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| parse_err(line, format!("`{field}` is not a number")))
}

fn parse_index(field: &str, what: &str, line: u64) -> Result<i64> {
    if let Ok(i) = field.parse::<i64>() {
        return Ok(i);
    }
    // Some exporters write integral indices as floats.
    match field.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v.abs() < 1e15 => Ok(v as i64),
        _ => Err(parse_err(
            line,
            format!("{what} index `{field}` is not an integer"),
        )),
    }
}

fn is_column(name: &str, want: &str) -> bool {
    name.trim_start_matches('.').eq_ignore_ascii_case(want)
}

/// Parses LONG-layout CSV.
pub fn parse_long<T: Scalar, R: Read>(
    reader: R,
    format: &DrawsFileFormat,
) -> Result<DrawsMatrix<T>> {
    let mut rdr = csv_reader(reader, format);
    let mut records = rdr.records();

    let (chain_col, draw_col, params, names) = if format.has_header {
        let header = match records.next() {
            Some(r) => {
                r.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?
            }
            None => return Err(DiagError::Empty("no header")),
        };
        let find = |want: &str| header.iter().position(|h| is_column(h, want));
        let chain_col = find("chain").ok_or_else(|| parse_err(1, "missing `chain` column"))?;
        let draw_col = find("draw").ok_or_else(|| parse_err(1, "missing `draw` column"))?;
        let params: Vec<usize> = (0..header.len())
            .filter(|&i| i != chain_col && i != draw_col)
            .collect();
        let names = params.iter().map(|&i| header[i].to_string()).collect();
        (chain_col, draw_col, params, names)
    } else {
        (0, 1, Vec::new(), Vec::new())
    };
    let mut params = params;
    let mut names: Vec<String> = names;

    // chain label -> (draw indices, per-parameter values)
    let mut by_chain: BTreeMap<i64, (Vec<i64>, Vec<Vec<f64>>)> = BTreeMap::new();
    let mut width = if format.has_header {
        Some(params.len() + 2)
    } else {
        None
    };
    for rec in records {
        let rec =
            rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        match width {
            None => {
                if rec.len() < 3 {
                    return Err(parse_err(
                        line,
                        "need chain, draw and at least one parameter column",
                    ));
                }
                params = (2..rec.len()).collect();
                names = (1..=params.len()).map(|i| format!("V{i}")).collect();
                width = Some(rec.len());
            }
            Some(w) if w != rec.len() => {
                return Err(parse_err(
                    line,
                    format!("expected {w} fields, found {}", rec.len()),
                ));
            }
            _ => {}
        }
        let chain = parse_index(&rec[chain_col], "chain", line)?;
        let draw = parse_index(&rec[draw_col], "draw", line)?;
        let entry = by_chain
            .entry(chain)
            .or_insert_with(|| (Vec::new(), vec![Vec::new(); params.len()]));
        if let Some(&prev) = entry.0.last() {
            if draw <= prev {
                return Err(parse_err(
                    line,
                    format!("draw {draw} of chain {chain} does not follow draw {prev}"),
                ));
            }
        }
        entry.0.push(draw);
        for (k, &col) in params.iter().enumerate() {
            entry.1[k].push(parse_value(&rec[col], line)?);
        }
    }
    if params.is_empty() && by_chain.is_empty() {
        return Err(DiagError::Empty("no draws"));
    }
    if params.is_empty() {
        return Err(DiagError::Empty("no parameter columns"));
    }
    if by_chain.is_empty() {
        return Err(DiagError::Empty("no draws"));
    }

    let labels: Vec<i64> = by_chain.keys().copied().collect();
    let base = labels[0];
    if !(base == 0 || base == 1) {
        return Err(DiagError::InvalidArgument(format!(
            "chain indices must start at 0 or 1, found {base}"
        )));
    }
    for (i, &l) in labels.iter().enumerate() {
        if l != base + i as i64 {
            return Err(DiagError::InvalidArgument(format!(
                "chain indices are not contiguous: {} missing",
                base + i as i64
            )));
        }
    }
    let expected = by_chain.values().map(|(d, _)| d.len()).max().unwrap_or(0);
    for (&label, (d, _)) in &by_chain {
        if d.len() != expected {
            return Err(DiagError::RaggedChain {
                chain: label.to_string(),
                expected,
                found: d.len(),
            });
        }
    }

    let mut data: Vec<Vec<Vec<T>>> = vec![Vec::with_capacity(labels.len()); params.len()];
    for (_, (_, values)) in by_chain {
        for (k, v) in values.into_iter().enumerate() {
            data[k].push(v.into_iter().map(T::of).collect());
        }
    }
    DrawsMatrix::from_parameters_with(names, data, format.nonfinite)
}

/// Parses one WIDE_PER_PARAM file: columns are chains, rows are draws.
pub fn parse_wide<T: Scalar, R: Read>(
    reader: R,
    name: &str,
    format: &DrawsFileFormat,
) -> Result<DrawsMatrix<T>> {
    let mut rdr = csv_reader(reader, format);
    let mut chains: Vec<Vec<f64>> = Vec::new();
    let mut skip_header = format.has_header;
    for rec in rdr.records() {
        let rec =
            rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if skip_header {
            skip_header = false;
            continue;
        }
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if chains.is_empty() {
            chains = vec![Vec::new(); rec.len()];
        } else if rec.len() != chains.len() {
            return Err(parse_err(
                line,
                format!(
                    "expected {} chains, found {} fields",
                    chains.len(),
                    rec.len()
                ),
            ));
        }
        for (c, field) in rec.iter().enumerate() {
            chains[c].push(parse_value(field, line)?);
        }
    }
    if chains.is_empty() {
        return Err(DiagError::Empty("no draws"));
    }
    let data = chains
        .into_iter()
        .map(|c| c.into_iter().map(T::of).collect())
        .collect();
    DrawsMatrix::from_parameters_with(vec![name.to_string()], vec![data], format.nonfinite)
}

/// Writes LONG-layout CSV with 1-based chain and draw indices and 17
/// significant digits per value.
pub fn write_draws<T: Scalar, W: Write>(draws: &DrawsMatrix<T>, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["chain".to_string(), "draw".to_string()];
    header.extend(draws.names().iter().cloned());
    out.write_record(&header).map_err(csv_io)?;
    let mut row = Vec::with_capacity(header.len());
    for m in 0..draws.chains() {
        for n in 0..draws.iterations() {
            row.clear();
            row.push((m + 1).to_string());
            row.push((n + 1).to_string());
            for p in 0..draws.parameters() {
                row.push(format_value(draws.chain(p, m)[n].as_f64()));
            }
            out.write_record(&row).map_err(csv_io)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes one parameter in WIDE_PER_PARAM layout (`chain1,chain2,...` header).
pub fn write_draws_wide<T: Scalar, W: Write>(
    draws: &DrawsMatrix<T>,
    param: usize,
    w: W,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let header: Vec<String> = (1..=draws.chains()).map(|m| format!("chain{m}")).collect();
    out.write_record(&header).map_err(csv_io)?;
    for n in 0..draws.iterations() {
        let row: Vec<String> = (0..draws.chains())
            .map(|m| format_value(draws.chain(param, m)[n].as_f64()))
            .collect();
        out.write_record(&row).map_err(csv_io)?;
    }
    out.flush()?;
    Ok(())
}

fn format_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn csv_io(e: csv::Error) -> DiagError {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => DiagError::Io(e),
        other => DiagError::InvalidArgument(format!("{other:?}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    Json,
    #[default]
    Table,
}

impl FromStr for ReportFormat {
    type Err = DiagError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "table" => Ok(ReportFormat::Table),
            _ => Err(DiagError::InvalidArgument(format!(
                "unknown report format `{s}`"
            ))),
        }
    }
}

pub fn write_report<W: Write>(
    report: &DiagnosticsReport,
    format: ReportFormat,
    mut w: W,
) -> Result<()> {
    match format {
        ReportFormat::Json => {
            // serde_json writes non-finite floats as null.
            serde_json::to_writer_pretty(&mut w, report)?;
            writeln!(w)?;
        }
        ReportFormat::Table => write_table(report, &mut w)?,
    }
    Ok(())
}

pub fn report_to_string(report: &DiagnosticsReport, format: ReportFormat) -> String {
    let mut buf = Vec::new();
    write_report(report, format, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("report output is UTF-8")
}

pub fn parse_report_json(s: &str) -> Result<DiagnosticsReport> {
    Ok(serde_json::from_str(s)?)
}

fn fmt_num(v: f64, decimals: usize) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{v:.decimals$}")
    }
}

fn fmt_sci(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{v:.2e}")
    }
}

/// Marker column: `*` for rows that miss a threshold, `?` for rows with
/// reliability flags only.
fn write_table<W: Write>(report: &DiagnosticsReport, w: &mut W) -> Result<()> {
    writeln!(
        w,
        "{} chains x {} iterations; thresholds rhat < {}, ess > {}",
        report.chains, report.iterations, report.config.rhat_threshold, report.config.ess_threshold
    )?;
    if !report.flags.is_empty() {
        let flags: Vec<&str> = report.flags.iter().map(|f| f.as_str()).collect();
        writeln!(w, "warnings: {}", flags.join(","))?;
    }
    let width = report
        .parameters
        .iter()
        .map(|p| p.parameter.len())
        .max()
        .unwrap_or(0)
        .max("parameter".len());
    writeln!(
        w,
        "  {:<width$}  {:>9}  {:>9}  {:>9}  {:>10}  flags",
        "parameter", "rhat_max", "ess_bulk", "ess_tail", "mcse_mean"
    )?;
    for p in &report.parameters {
        let marker = if p.violates(&report.config) {
            '*'
        } else if !p.reliability_flags.is_empty() {
            '?'
        } else {
            ' '
        };
        let flags: Vec<&str> = p.reliability_flags.iter().map(|f| f.as_str()).collect();
        writeln!(
            w,
            "{marker} {:<width$}  {:>9}  {:>9}  {:>9}  {:>10}  {}",
            p.parameter,
            fmt_num(p.rhat_max, 4),
            fmt_num(p.ess_bulk, 0),
            fmt_num(p.ess_tail, 0),
            fmt_sci(p.mcse_mean),
            flags.join(",")
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain_core::{ChainStat, DiagnosticConfig, Flag, SCHEMA_VERSION};

    fn long(s: &str) -> Result<DrawsMatrix<f64>> {
        parse_long(s.as_bytes(), &DrawsFileFormat::default())
    }

    #[test]
    fn long_two_chains_three_draws() {
        let m =
            long("chain,draw,mu\n1,1,0.5\n1,2,0.7\n1,3,0.1\n2,1,1.5\n2,2,1.7\n2,3,1.1\n").unwrap();
        assert_eq!((m.chains(), m.iterations(), m.parameters()), (2, 3, 1));
        assert_eq!(m.chain(0, 1), &[1.5, 1.7, 1.1]);
    }

    #[test]
    fn zero_based_chains_and_interleaved_rows() {
        let m = long("draw,chain,a,b\n0,0,1,2\n0,1,3,4\n1,0,5,6\n1,1,7,8\n").unwrap();
        assert_eq!(m.names(), &["a", "b"]);
        assert_eq!(m.chain(1, 1), &[4.0, 8.0]);
    }

    #[test]
    fn ragged_names_the_short_chain() {
        let mut s = String::from("chain,draw,x\n");
        for d in 1..=999 {
            s += &format!("1,{d},0.{d}\n");
        }
        for d in 1..=1000 {
            s += &format!("2,{d},0.{d}\n");
        }
        match long(&s) {
            Err(DiagError::RaggedChain {
                chain,
                expected,
                found,
            }) => {
                assert_eq!((chain.as_str(), expected, found), ("1", 1000, 999));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_error_reports_line() {
        let err = long("chain,draw,x\n1,1,0.5\n1,2,abc\n").unwrap_err();
        assert!(matches!(err, DiagError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn rejects_missing_columns_and_bad_order() {
        assert!(matches!(
            long("draw,x\n1,2\n"),
            Err(DiagError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            long("chain,draw,x\n1,2,0\n1,1,0\n"),
            Err(DiagError::Parse { line: 3, .. })
        ));
        assert!(long("chain,draw,x\n1,1,0\n3,1,0\n").is_err());
        assert!(long("chain,draw,x\n2,1,0\n3,1,0\n").is_err());
    }

    #[test]
    fn nonfinite_rejected_unless_admitted() {
        let s = "chain,draw,x\n1,1,NaN\n1,2,1\n";
        assert!(matches!(long(s), Err(DiagError::NonFinite { .. })));
        let fmt = DrawsFileFormat {
            nonfinite: NonFinitePolicy::Admit,
            ..Default::default()
        };
        let m: DrawsMatrix<f64> = parse_long(s.as_bytes(), &fmt).unwrap();
        assert!(m.has_nonfinite(0));
    }

    #[test]
    fn headerless_and_semicolon() {
        let fmt = DrawsFileFormat {
            delimiter: b';',
            has_header: false,
            ..Default::default()
        };
        let m: DrawsMatrix<f64> = parse_long("1;1;2.5;3\n1;2;2.0;1\n".as_bytes(), &fmt).unwrap();
        assert_eq!(m.names(), &["V1", "V2"]);
        assert_eq!(m.chain(1, 0), &[3.0, 1.0]);
    }

    #[test]
    fn wide_layout() {
        let m: DrawsMatrix<f64> = parse_wide(
            "c1,c2\n1,2\n3,4\n5,6\n".as_bytes(),
            "tau",
            &DrawsFileFormat::default(),
        )
        .unwrap();
        assert_eq!((m.chains(), m.iterations()), (2, 3));
        assert_eq!(m.chain(0, 1), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn draws_round_trip_exactly() {
        let vals = vec![
            vec![0.1, -1.0 / 3.0, 1e-300, f64::MAX],
            vec![std::f64::consts::PI, 2.5e17, -0.0, 5e-324],
        ];
        let m = DrawsMatrix::from_chains("x", vals).unwrap();
        let mut buf = Vec::new();
        write_draws(&m, &mut buf).unwrap();
        let back: DrawsMatrix<f64> =
            parse_long(buf.as_slice(), &DrawsFileFormat::default()).unwrap();
        assert_eq!(back, m);
        let mut buf = Vec::new();
        write_draws_wide(&m, 0, &mut buf).unwrap();
        let back: DrawsMatrix<f64> =
            parse_wide(buf.as_slice(), "x", &DrawsFileFormat::default()).unwrap();
        assert_eq!(back, m);
    }

    fn report(parameters: Vec<ChainStat>) -> DiagnosticsReport {
        DiagnosticsReport {
            schema_version: SCHEMA_VERSION,
            tool_version: "0.0.0".into(),
            timestamp: "2020-01-01T00:00:00Z".into(),
            chains: 4,
            iterations: 100,
            config: DiagnosticConfig::default(),
            flags: vec![],
            parameters,
        }
    }

    #[test]
    fn empty_report_is_valid_json() {
        let s = report_to_string(&report(vec![]), ReportFormat::Json);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["parameters"], serde_json::json!([]));
        assert_eq!(v["schema_version"], 1);
    }

    #[test]
    fn nan_becomes_null_and_round_trips() {
        let mut ok = ChainStat::degenerate("b", vec![]);
        ok.rhat_max = 1.0 + f64::EPSILON;
        ok.ess_bulk = 1234.567890123;
        let r = report(vec![
            ChainStat::degenerate("a", vec![Flag::ConstantParameter]),
            ok,
        ]);
        let s = report_to_string(&r, ReportFormat::Json);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert!(v["parameters"][0]["rhat_max"].is_null());
        assert_eq!(
            v["parameters"][0]["reliability_flags"][0],
            "CONSTANT_PARAMETER"
        );
        let back = parse_report_json(&s).unwrap();
        assert!(back.parameters[0].rhat_max.is_nan());
        assert_eq!(back.parameters[1].rhat_max, r.parameters[1].rhat_max);
        assert_eq!(back.parameters[1].ess_bulk, r.parameters[1].ess_bulk);
    }

    #[test]
    fn table_marks_flagged_rows() {
        let mut bad = ChainStat::degenerate("bad", vec![Flag::RhatAboveThreshold]);
        bad.rhat_max = 1.05;
        bad.ess_bulk = 900.0;
        bad.ess_tail = 800.0;
        let mut good = bad.clone();
        good.parameter = "good".into();
        good.rhat_max = 1.001;
        good.reliability_flags.clear();
        let t = report_to_string(&report(vec![bad, good]), ReportFormat::Table);
        let rows: Vec<&str> = t.lines().collect();
        assert!(rows[2].starts_with("* bad"), "{t}");
        assert!(rows[2].ends_with("RHAT_ABOVE_THRESHOLD"));
        assert!(rows[3].starts_with("  good"));
        assert!(rows[2].contains("1.0500"));
    }
}
