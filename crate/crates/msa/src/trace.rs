//! CSV files written by the subcommands.
//!
//! Every float is printed with 17 significant digits in `%g` style, so a
//! parsed file reproduces the written values bit for bit.

use std::io::{Read, Write};

use msa_core::IterationRecord;
use serde::Deserialize;

use crate::CliError;

pub const TRACE_HEADER: [&str; 7] = [
    "iter",
    "J",
    "J_stderr",
    "mu",
    "mu_stderr",
    "descent",
    "wall_ms",
];
pub const RATE_HEADER: [&str; 3] = ["iter", "gap", "iter_times_gap"];

/// One row of the `run` trace. `J` is the cost of the control entering
/// iteration `iter`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "J_stderr")]
    pub j_stderr: f64,
    pub mu: f64,
    pub mu_stderr: f64,
    pub descent: f64,
    pub wall_ms: f64,
}

impl From<&IterationRecord> for TraceRow {
    fn from(r: &IterationRecord) -> Self {
        TraceRow {
            iter: r.m,
            j: r.cost.mean,
            j_stderr: r.cost.stderr,
            mu: r.mu.mean,
            mu_stderr: r.mu.stderr,
            descent: r.descent,
            wall_ms: r.wall_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct RateRow {
    pub iter: usize,
    pub gap: f64,
    pub iter_times_gap: f64,
}

/// `x` with 17 significant digits, trailing zeros removed.
pub fn fmt_g17(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        trim_zeros(format!("{x:.*}", (16 - exp) as usize))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(mut s: String) -> String {
    if s.contains('.') {
        let keep = s.trim_end_matches('0').trim_end_matches('.').len();
        s.truncate(keep);
    }
    s
}

fn io_error(e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("cannot write output: {e}"))
}

fn write_rows<W: Write, const C: usize>(
    out: W,
    header: [&str; C],
    rows: impl Iterator<Item = [String; C]>,
) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(header).map_err(io_error)?;
    for row in rows {
        w.write_record(&row).map_err(io_error)?;
    }
    w.flush().map_err(io_error)
}

pub fn write_trace<W: Write>(out: W, rows: &[TraceRow]) -> Result<(), CliError> {
    write_rows(
        out,
        TRACE_HEADER,
        rows.iter().map(|r| {
            [
                r.iter.to_string(),
                fmt_g17(r.j),
                fmt_g17(r.j_stderr),
                fmt_g17(r.mu),
                fmt_g17(r.mu_stderr),
                fmt_g17(r.descent),
                fmt_g17(r.wall_ms),
            ]
        }),
    )
}

pub fn write_rate<W: Write>(out: W, rows: &[RateRow]) -> Result<(), CliError> {
    write_rows(
        out,
        RATE_HEADER,
        rows.iter().map(|r| {
            [
                r.iter.to_string(),
                fmt_g17(r.gap),
                fmt_g17(r.iter_times_gap),
            ]
        }),
    )
}

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(
    input: R,
    header: &[&str],
) -> Result<Vec<T>, CliError> {
    let mut rdr = csv::Reader::from_reader(input);
    let found = rdr.headers().map_err(|e| CliError::Config(e.to_string()))?;
    if found.iter().ne(header.iter().copied()) {
        return Err(CliError::Config(format!("unexpected CSV header {found:?}")));
    }
    rdr.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| CliError::Config(e.to_string()))
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRow>, CliError> {
    read_rows(input, &TRACE_HEADER)
}

pub fn read_rate<R: Read>(input: R) -> Result<Vec<RateRow>, CliError> {
    read_rows(input, &RATE_HEADER)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_matches_printf() {
        let cases = [
            (0.1, "0.10000000000000001"),
            (1.0, "1"),
            (-2.5, "-2.5"),
            (1e-7, "9.9999999999999995e-8"),
            (123456.0, "123456"),
            (1e17, "1e17"),
            (0.0, "0"),
            (1.0 / 3.0, "0.33333333333333331"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt_g17(x), want, "{x}");
        }
    }

    #[test]
    fn g17_round_trips() {
        let mut x = 1.234_567_890_123_456_7e-300;
        while x < 1e300 {
            for v in [x, -x, x * 0.999_999_999_999_7] {
                assert_eq!(fmt_g17(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
            }
            x *= 7.77;
        }
        assert!(fmt_g17(f64::NAN).parse::<f64>().unwrap().is_nan());
        assert_eq!(
            fmt_g17(f64::NEG_INFINITY).parse::<f64>().unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn trace_round_trips_in_memory() {
        let rows = vec![
            TraceRow {
                iter: 1,
                j: 0.1,
                j_stderr: 1e-9,
                mu: -0.0,
                mu_stderr: 0.0,
                descent: f64::NAN,
                wall_ms: 12.5,
            },
            TraceRow {
                iter: 2,
                j: -3e-320,
                j_stderr: 2.0,
                mu: 1e300,
                mu_stderr: 7.0,
                descent: 0.25,
                wall_ms: 0.0,
            },
        ];
        let mut buf = Vec::new();
        write_trace(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("iter,J,J_stderr,mu,mu_stderr,descent,wall_ms\n"));
        assert!(!text.contains('\r'));
        let back = read_trace(buf.as_slice()).unwrap();
        assert_eq!(back[1], rows[1]);
        assert!(back[0].descent.is_nan());
        assert_eq!(back[0].mu.to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(read_trace("iter,gap,iter_times_gap\n1,0,0\n".as_bytes()).is_err());
    }
}
