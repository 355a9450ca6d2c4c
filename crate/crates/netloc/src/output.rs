//! CSV and JSON artifact writers. Floats are written with 17 significant
//! digits; infinities as `inf` / `-inf`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::frequency::PspecGrid;
use crate::simulate::Trajectory;
use crate::spectral::{Label, LocalizationReport, Spectrum};
use crate::Result;

pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:.16e}")
    }
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// `index, lambda[, ipr, q, r2, label]`.
pub fn write_spectrum_csv(path: impl AsRef<Path>, s: &Spectrum, report: Option<&LocalizationReport>) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    if report.is_some() {
        w.write_record(["index", "lambda", "ipr", "q", "r2", "label"])?;
    } else {
        w.write_record(["index", "lambda"])?;
    }
    for (i, &lam) in s.values.iter().enumerate() {
        let mut rec = vec![i.to_string(), fmt_f64(lam)];
        if let Some(r) = report {
            let f = r.decay_fits[i];
            rec.extend([
                fmt_f64(r.ipr[i]),
                fmt_f64(f.q),
                fmt_f64(f.r2),
                match r.labels[i] {
                    Label::Localized => "localized".into(),
                    Label::Delocalized => "delocalized".into(),
                },
            ]);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per node: `node, v0, v1, ...`.
pub fn write_eigenvectors_csv(path: impl AsRef<Path>, s: &Spectrum) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    let n = s.n();
    let mut header = vec!["node".to_string()];
    header.extend((0..n).map(|i| format!("v{i}")));
    w.write_record(&header)?;
    for k in 0..n {
        let mut rec = vec![k.to_string()];
        rec.extend((0..n).map(|i| fmt_f64(s.vectors[(k, i)])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn region_name(localized: bool) -> &'static str {
    if localized {
        "localized"
    } else {
        "delocalized"
    }
}

/// `node, value, region`.
pub fn write_node_map(path: impl AsRef<Path>, values: &[f64], region: &[bool]) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["node", "value", "region"])?;
    for (k, v) in values.iter().enumerate() {
        w.write_record([k.to_string(), fmt_f64(*v), region_name(region[k]).into()])?;
    }
    w.flush()?;
    Ok(())
}

/// `k, l, value, region` with region `localized`, `delocalized` or `cross`.
pub fn write_edge_map(path: impl AsRef<Path>, edges: &[(usize, usize, f64)], region: &[bool]) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["k", "l", "value", "region"])?;
    for &(k, l, v) in edges {
        let r = match (region[k], region[l]) {
            (true, true) => "localized",
            (false, false) => "delocalized",
            _ => "cross",
        };
        w.write_record([k.to_string(), l.to_string(), fmt_f64(v), r.into()])?;
    }
    w.flush()?;
    Ok(())
}

/// `index, lambda, sensitivity`.
pub fn write_profile(path: impl AsRef<Path>, s: &Spectrum, profile: &[f64]) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["index", "lambda", "sensitivity"])?;
    for (i, p) in profile.iter().enumerate() {
        w.write_record([i.to_string(), fmt_f64(s.values[i]), fmt_f64(*p)])?;
    }
    w.flush()?;
    Ok(())
}

/// `re, im, log10mag` followed by one `mask_<eps>` column (0/1) per level.
pub fn write_grid(path: impl AsRef<Path>, g: &PspecGrid) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    let mut header = vec!["re".to_string(), "im".into(), "log10mag".into()];
    header.extend(g.epsilons.iter().map(|e| format!("mask_{e}")));
    w.write_record(&header)?;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let mut rec = vec![fmt_f64(g.re[i]), fmt_f64(g.im[j]), fmt_f64(g.value(i, j))];
            rec.extend((0..g.epsilons.len()).map(|e| if g.mask(e, i, j) { "1" } else { "0" }.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `t, theta0, ..., theta{n-1}, d` for every recorded state.
pub fn write_trajectory(path: impl AsRef<Path>, traj: &Trajectory) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    let mut header = vec!["t".to_string()];
    header.extend((0..traj.n).map(|i| format!("theta{i}")));
    header.push("d".into());
    w.write_record(&header)?;
    for (k, (theta, _)) in traj.states.iter().enumerate() {
        let step = k * traj.record_every;
        let mut rec = vec![fmt_f64(traj.times[step])];
        rec.extend(theta.iter().map(|x| fmt_f64(*x)));
        rec.push(fmt_f64(traj.sync[step]));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 1.7976931348623157e308] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
    }
}
