//! Tabular view of a trace and its CSV rendering.

use eeqcbf_core::simloop::{Sample, SimTrace};

/// Column names in output order.
pub fn columns(trace: &SimTrace) -> Vec<String> {
    let (n, m, terms) = (trace.state_dim(), trace.input_dim(), trace.terms());
    let mut cols = vec!["t".to_owned()];
    cols.extend((1..=n).map(|i| format!("x{i}")));
    cols.extend((1..=n).map(|i| format!("xhat{i}")));
    cols.extend((1..=m).map(|i| format!("u{i}")));
    cols.extend(
        ["h_true", "h0", "barrier_eps", "residual", "M"]
            .into_iter()
            .map(String::from),
    );
    cols.extend((1..=terms).map(|i| format!("theta_norm_{i}")));
    cols.push("qp_active".into());
    cols.push("qp_feasible".into());
    cols
}

/// One sample as numbers, in [`columns`] order; flags are 0 or 1.
pub fn row_values(s: &Sample) -> Vec<f64> {
    let mut row = vec![s.t];
    row.extend(s.x.iter());
    row.extend(s.xhat.iter());
    row.extend(s.u.iter());
    row.extend([s.h_true, s.h0, s.barrier_eps, s.residual, s.m_bound]);
    row.extend(s.theta_norms.iter());
    row.push(f64::from(u8::from(s.qp_active)));
    row.push(f64::from(u8::from(s.qp_feasible)));
    row
}

/// The values of one named column, or `None` if no such column exists.
pub fn column(trace: &SimTrace, name: &str) -> Option<Vec<f64>> {
    let idx = columns(trace).iter().position(|c| c == name)?;
    Some(trace.samples.iter().map(|s| row_values(s)[idx]).collect())
}

/// Formats `v` with 12 significant digits, in the style of C's `%.12g`.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{v:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_owned()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn emit_csv(trace: &SimTrace) -> String {
    let mut out = columns(trace).join(",");
    out.push('\n');
    for s in &trace.samples {
        let row: Vec<String> = row_values(s).into_iter().map(fmt_num).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
