use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// Accuracy of one method, at one horizon, for one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    #[serde(rename = "T")]
    pub steps: usize,
    pub seed: u64,
    pub accuracy: f64,
}

/// Accuracy after step `t` of one run, for curves over time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub method: String,
    pub seed: u64,
    pub t: usize,
    pub accuracy: f64,
}

/// Mean and standard error over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`; absent for a single seed.
    pub stderr: Option<f64>,
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let stderr = (n >= 2).then(|| {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    });
    Summary { n, mean, stderr }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub method: String,
    pub steps: usize,
    pub summary: Summary,
}

fn method_rank(name: &str) -> (usize, String) {
    let pos = super::Method::ALL.iter().position(|m| m.name() == name).unwrap_or(usize::MAX);
    (pos, name.to_string())
}

/// Groups rows by method and horizon.
pub fn table(rows: &[ResultRow]) -> Vec<TableRow> {
    let mut groups: BTreeMap<((usize, String), usize), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups.entry((method_rank(&r.method), r.steps)).or_default().push(r.accuracy);
    }
    groups
        .into_iter()
        .map(|(((_, method), steps), accs)| TableRow { method, steps, summary: summarize(&accs) })
        .collect()
}

fn percent(s: &Summary) -> String {
    match s.stderr {
        Some(se) => format!("{:.2} ± {:.2}", 100.0 * s.mean, 100.0 * se),
        None => format!("{:.2}", 100.0 * s.mean),
    }
}

/// One line per method, one `T=k acc.` column per horizon, cells in percent.
pub fn write_table<W: Write>(out: W, rows: &[TableRow]) -> Result<(), HarnessError> {
    let mut horizons: Vec<usize> = rows.iter().map(|r| r.steps).collect();
    horizons.sort_unstable();
    horizons.dedup();
    let mut methods: Vec<String> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["method".to_string()];
    header.extend(horizons.iter().map(|t| format!("T={t} acc.")));
    w.write_record(&header).map_err(runtime)?;
    for m in &methods {
        let mut line = vec![m.clone()];
        for &t in &horizons {
            line.push(rows.iter().find(|r| &r.method == m && r.steps == t).map(|r| percent(&r.summary)).unwrap_or_default());
        }
        w.write_record(&line).map_err(runtime)?;
    }
    w.flush().map_err(|e| HarnessError::Runtime(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub method: String,
    pub t: usize,
    pub n: usize,
    pub mean: f64,
    pub stderr: Option<f64>,
}

type Runs = BTreeMap<(usize, String), BTreeMap<u64, Vec<(usize, f64)>>>;

/// Accuracy against time step per method. Every run of a method must cover
/// the same steps `1..=T`.
pub fn curves(rows: &[StepRow]) -> Result<Vec<CurvePoint>, HarnessError> {
    let mut runs = Runs::new();
    for r in rows {
        runs.entry(method_rank(&r.method)).or_default().entry(r.seed).or_default().push((r.t, r.accuracy));
    }
    let mut out = Vec::new();
    for ((_, method), seeds) in runs {
        let mut horizon = None;
        for (seed, steps) in &seeds {
            let mut ts: Vec<usize> = steps.iter().map(|s| s.0).collect();
            ts.sort_unstable();
            if ts != (1..=ts.len()).collect::<Vec<_>>() {
                return Err(HarnessError::Data(format!("{method} seed {seed}: steps {ts:?} are not 1..=T")));
            }
            match horizon {
                None => horizon = Some(ts.len()),
                Some(h) if h != ts.len() => {
                    return Err(HarnessError::Data(format!("{method}: runs disagree on T ({h} vs {})", ts.len())));
                }
                _ => {}
            }
        }
        for t in 1..=horizon.unwrap_or(0) {
            let accs: Vec<f64> = seeds.values().map(|s| s.iter().find(|x| x.0 == t).expect("checked").1).collect();
            let s = summarize(&accs);
            out.push(CurvePoint { method: method.clone(), t, n: s.n, mean: s.mean, stderr: s.stderr });
        }
    }
    Ok(out)
}

fn runtime(e: csv::Error) -> HarnessError {
    HarnessError::Runtime(e.to_string())
}

pub fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(runtime)?;
    }
    w.flush().map_err(|e| HarnessError::Runtime(e.to_string()))
}

pub fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(input: R) -> Result<Vec<T>, HarnessError> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| HarnessError::Data(e.to_string()))
}
