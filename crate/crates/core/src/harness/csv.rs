use std::io::{self, Write};

use super::stats::Interval;
use super::sweep::ComparisonRow;

pub const CSV_HEADER: &str = "rho,lambda,pb_theory,pb_sim,pb_ci,W_theory,W_sim,W_ci,\
T_theory,T_sim,T_ci,D_theory,D_sim,D_ci,stable_flag";

const SIG_DIGITS: usize = 10;
const MISSING: &str = "na";
const UNSTABLE: &str = "inf";

/// Formats `x` with ten significant digits in the style of C's `%.10g`.
pub fn format_sig(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent in scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..SIG_DIGITS as i32).contains(&exp) {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!(
            "{}e{sign}{:02}",
            trim_zeros(mantissa.to_string()),
            exp.abs()
        )
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| MISSING.to_string(), format_sig)
}

fn estimate(e: Option<Interval>) -> [String; 2] {
    match e {
        Some(i) => [format_sig(i.mean), opt(i.halfwidth)],
        None => [MISSING.into(), MISSING.into()],
    }
}

fn row_cells(row: &ComparisonRow) -> Vec<String> {
    let mut cells = vec![
        format_sig(row.rho),
        format_sig(row.lambda),
        format_sig(row.theory.p_b),
    ];
    cells.extend(estimate(row.sim.as_ref().map(|s| s.p_b)));
    let delays = [
        (row.theory.w, row.sim.as_ref().and_then(|s| s.w)),
        (row.theory.t, row.sim.as_ref().and_then(|s| s.t)),
        (row.theory.d, row.sim.as_ref().and_then(|s| s.d)),
    ];
    for (theory, sim) in delays {
        if row.stable {
            cells.push(opt(theory));
            cells.extend(estimate(sim));
        } else {
            cells.extend([UNSTABLE, UNSTABLE, UNSTABLE].map(String::from));
        }
    }
    cells.push(u8::from(row.stable).to_string());
    cells
}

pub fn write_csv<W: Write>(out: &mut W, rows: &[ComparisonRow]) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row_cells(row).join(","))?;
    }
    Ok(())
}
