//! Study records, CSV files and gnuplot scripts.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use crate::schemes::SolveStatus;
use crate::studies::config::StudyKind;

/// One solve of a sweep. Error fields are NaN when the solve failed.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyRecord {
    pub scheme: String,
    pub n: usize,
    pub h: f64,
    pub eps: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub err_l2_abs: f64,
    pub err_h1_abs: f64,
    pub err_l2_rel: f64,
    pub err_h1_rel: f64,
    pub q_or_xi_l2_norm: f64,
    pub q_or_xi_h1_norm: f64,
    pub cond1: f64,
    pub solve_status: SolveStatus,
    pub wall_time_seconds: f64,
}

pub const RECORD_HEADER: &str = "scheme,n,h,eps,sigma,alpha,err_L2_abs,err_H1_abs,err_L2_rel,err_H1_rel,\
q_or_xi_L2_norm,q_or_xi_H1_norm,cond1,solve_status,wall_time_seconds";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InfsupRow {
    pub n: usize,
    pub h: f64,
    pub ratio: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Remark3Row {
    pub k: u32,
    pub computed_ratio: f64,
    pub analytic_ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StudyOutput {
    Records(Vec<StudyRecord>),
    Infsup(Vec<InfsupRow>),
    Remark3(Vec<Remark3Row>),
}

impl StudyOutput {
    pub fn records(&self) -> &[StudyRecord] {
        match self {
            StudyOutput::Records(r) => r,
            _ => &[],
        }
    }
}

/// 17 significant digits, enough to round-trip any f64.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn record_line(r: &StudyRecord) -> String {
    let floats = [
        r.h,
        r.eps,
        r.sigma,
        r.alpha,
        r.err_l2_abs,
        r.err_h1_abs,
        r.err_l2_rel,
        r.err_h1_rel,
        r.q_or_xi_l2_norm,
        r.q_or_xi_h1_norm,
        r.cond1,
    ];
    let mut s = format!("{},{}", r.scheme, r.n);
    for x in floats {
        s.push(',');
        s.push_str(&fmt_f64(x));
    }
    let _ = write!(s, ",{},{}", r.solve_status.name(), fmt_f64(r.wall_time_seconds));
    s
}

pub fn to_csv(out: &StudyOutput) -> String {
    let mut s = String::new();
    match out {
        StudyOutput::Records(rs) => {
            s.push_str(RECORD_HEADER);
            s.push('\n');
            for r in rs {
                s.push_str(&record_line(r));
                s.push('\n');
            }
        }
        StudyOutput::Infsup(rows) => {
            s.push_str("n,h,ratio\n");
            for r in rows {
                let _ = writeln!(s, "{},{},{}", r.n, fmt_f64(r.h), fmt_f64(r.ratio));
            }
        }
        StudyOutput::Remark3(rows) => {
            s.push_str("k,computed_ratio,analytic_ratio\n");
            for r in rows {
                let _ = writeln!(s, "{},{},{}", r.k, fmt_f64(r.computed_ratio), fmt_f64(r.analytic_ratio));
            }
        }
    }
    s
}

pub fn emit_csv(out: &StudyOutput, path: &Path) -> io::Result<()> {
    let mut f = io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(to_csv(out).as_bytes())?;
    f.flush()
}

fn parse_status(s: &str) -> Option<SolveStatus> {
    [SolveStatus::Ok, SolveStatus::IllConditioned, SolveStatus::Singular].into_iter().find(|st| st.name() == s)
}

/// Inverse of [`to_csv`] for record tables.
pub fn parse_records_csv(text: &str) -> Result<Vec<StudyRecord>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(RECORD_HEADER) {
        return Err("missing or wrong header".into());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = |what: &str| format!("row {}: {what}", i + 1);
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 15 {
                return Err(bad("expected 15 fields"));
            }
            let x = |k: usize| f[k].parse::<f64>().map_err(|_| bad(&format!("field {k} is not a number")));
            Ok(StudyRecord {
                scheme: f[0].to_string(),
                n: f[1].parse().map_err(|_| bad("n"))?,
                h: x(2)?,
                eps: x(3)?,
                sigma: x(4)?,
                alpha: x(5)?,
                err_l2_abs: x(6)?,
                err_h1_abs: x(7)?,
                err_l2_rel: x(8)?,
                err_h1_rel: x(9)?,
                q_or_xi_l2_norm: x(10)?,
                q_or_xi_h1_norm: x(11)?,
                cond1: x(12)?,
                solve_status: parse_status(f[13]).ok_or_else(|| bad("status"))?,
                wall_time_seconds: x(14)?,
            })
        })
        .collect()
}

/// Gnuplot script drawing log-log curves from the CSV at `csv_name`, one
/// curve per scheme/regime group. The script is written, never executed.
pub fn plot_script(kind: StudyKind, out: &StudyOutput, csv_name: &str) -> String {
    let stem = csv_name.strip_suffix(".csv").unwrap_or(csv_name);
    let mut s = String::new();
    let _ = writeln!(s, "# gnuplot script; run with: gnuplot {stem}.gp");
    s.push_str("set datafile separator ','\nset terminal pngcairo size 900,650\nset key outside right\nset logscale xy\nset format xy '%.0e'\n");
    match out {
        StudyOutput::Infsup(_) => {
            let _ = write!(
                s,
                "set output '{stem}.png'\nset xlabel 'n'\nset ylabel 'coarse/fine ratio'\nplot '{csv_name}' every ::1 using 1:3 with linespoints title 'ratio'\n"
            );
        }
        StudyOutput::Remark3(_) => {
            let _ = write!(
                s,
                "set output '{stem}.png'\nset xlabel 'k'\nset ylabel 'ratio'\n\
                 plot '{csv_name}' every ::1 using 1:2 with points title 'computed', \\\n     '{csv_name}' every ::1 using 1:3 with lines title 'closed form'\n"
            );
        }
        StudyOutput::Records(rs) => {
            let (xcol, xlabel) = match kind {
                StudyKind::SigmaSweep => (5, "sigma"),
                StudyKind::EpsSweep => (4, "eps"),
                _ => (3, "h"),
            };
            let panels: &[(usize, &str, &str)] = match kind {
                StudyKind::HConvergence => &[(9, "L2", "relative L2 error"), (10, "H1", "relative H1 error")],
                StudyKind::Conditioning => &[(13, "cond", "cond1")],
                StudyKind::LowRegularity => &[(11, "aux_L2", "L2 norm of q / xi"), (12, "aux_H1", "H1 norm of q / xi"), (7, "L2", "L2 error")],
                _ => &[(7, "L2", "absolute L2 error"), (8, "H1", "absolute H1 error")],
            };
            // groups in first-appearance order
            let mut groups: Vec<(String, f64, f64, Option<usize>)> = Vec::new();
            for r in rs {
                let n_key = (kind == StudyKind::SigmaSweep).then_some(r.n);
                let eps_key = if kind == StudyKind::EpsSweep { f64::NAN } else { r.eps };
                let g = (r.scheme.clone(), eps_key, r.alpha, n_key);
                if !groups.iter().any(|x| x.0 == g.0 && same(x.1, g.1) && x.2 == g.2 && x.3 == g.3) {
                    groups.push(g);
                }
            }
            for (col, tag, ylabel) in panels {
                let _ = writeln!(s, "set output '{stem}_{tag}.png'\nset xlabel '{xlabel}'\nset ylabel '{ylabel}'");
                let curves: Vec<String> = groups
                    .iter()
                    .map(|(scheme, eps, alpha, n)| {
                        let mut cond = format!("strcol(1) eq '{scheme}' && $6 == {alpha:e}");
                        let mut title = format!("{scheme} alpha={alpha}");
                        if !eps.is_nan() {
                            let _ = write!(cond, " && $4 == {eps:e}");
                            let _ = write!(title, " eps={eps:e}");
                        }
                        if let Some(n) = n {
                            let _ = write!(cond, " && $2 == {n}");
                            let _ = write!(title, " n={n}");
                        }
                        format!("'{csv_name}' every ::1 using {xcol}:(({cond}) ? ${col} : NaN) with linespoints title '{title}'")
                    })
                    .collect();
                if curves.is_empty() {
                    s.push_str("# no records\n");
                } else {
                    let _ = writeln!(s, "plot {}", curves.join(", \\\n     "));
                }
            }
        }
    }
    s
}

fn same(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

pub fn emit_plot_script(kind: StudyKind, out: &StudyOutput, csv_path: &Path) -> io::Result<()> {
    let name = csv_path.file_name().and_then(|n| n.to_str()).unwrap_or("study.csv");
    std::fs::write(csv_path.with_extension("gp"), plot_script(kind, out, name))
}
