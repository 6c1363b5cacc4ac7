//! CSV files exchanged between subcommands.
//!
//! - scores: `index,method,score`, score printed with 9 significant digits
//!   (`%.9g` style), `+inf` as `inf`
//! - curve: `rank,input_index,is_error,cum_errors` (rank is 1-based)
//! - selection: `rank,input_index`

use std::io::{Read, Write};

use prioritizer_core::{Error, Method, ScoreRecord};

/// `%.9g` formatting.
pub fn format_score(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (8 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("csv: {other:?}")),
    }
}

pub fn write_scores<W: Write>(out: W, scores: &[ScoreRecord]) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "method", "score"])
        .map_err(csv_err)?;
    for s in scores {
        w.write_record([
            s.input_index.to_string(),
            s.method.to_string(),
            format_score(s.score),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scores<R: Read>(input: R) -> Result<Vec<ScoreRecord>, Error> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(csv_err)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["index", "method", "score"] {
        return Err(Error::Format(format!(
            "scores header must be `index,method,score`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut scores = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |what: &str| Error::Format(format!("scores row {}: bad {what}", line + 1));
        let input_index = rec[0].parse::<u32>().map_err(|_| bad("index"))?;
        let method = rec[1].parse::<Method>().map_err(|_| bad("method"))?;
        let score = rec[2].parse::<f64>().map_err(|_| bad("score"))?;
        scores.push(ScoreRecord {
            input_index,
            method,
            score,
        });
    }
    Ok(scores)
}

pub fn write_curve<W: Write>(
    out: W,
    perm: &[u32],
    is_error: &[bool],
    cum_errors: &[u32],
) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "input_index", "is_error", "cum_errors"])
        .map_err(csv_err)?;
    for (k, (&i, &c)) in perm.iter().zip(cum_errors).enumerate() {
        let e = if is_error[i as usize] { "1" } else { "0" };
        w.write_record([
            (k + 1).to_string(),
            i.to_string(),
            e.to_string(),
            c.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_selection<W: Write>(out: W, indices: &[u32]) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "input_index"]).map_err(csv_err)?;
    for (k, i) in indices.iter().enumerate() {
        w.write_record([(k + 1).to_string(), i.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
