//! CSV reports for the experiments. Floats use the shortest round-trip form.

use std::io::Write;

use crate::analysis::experiments::{FrequencyCase, PhantomResult, VolumeSummary};
use crate::analysis::SpectrumReport;
use crate::error::Result;

fn num(v: f64) -> String {
    v.to_string()
}

/// `method,rmse,rmse_fraction,sigma_p_x_mm,sigma_p_y_mm`
pub fn write_phantom_csv<W: Write>(out: W, result: &PhantomResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method",
        "rmse",
        "rmse_fraction",
        "sigma_p_x_mm",
        "sigma_p_y_mm",
    ])?;
    for (method, rmse) in result.errors() {
        w.write_record([
            method.to_string(),
            num(rmse),
            num(rmse / result.range),
            num(result.sigma_p[0]),
            num(result.sigma_p[1]),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `case,method,total_power,supra_nyquist_power,fraction,suppression`, with a
/// closing `mean` row carrying only the mean suppression.
pub fn write_spectrum_csv<W: Write>(
    out: W,
    cases: &[FrequencyCase],
    mean: Option<f64>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "case",
        "method",
        "total_power",
        "supra_nyquist_power",
        "fraction",
        "suppression",
    ])?;
    let row = |r: &SpectrumReport| {
        [
            num(r.total_power),
            num(r.supra_nyquist_power),
            num(r.fraction),
        ]
    };
    for c in cases {
        let [t, s, f] = row(&c.sinc);
        w.write_record([c.id.to_string(), "sinc3".into(), t, s, f, String::new()])?;
        let [t, s, f] = row(&c.sfpsf);
        let sup = c.suppression.map(num).unwrap_or_else(|| "NA".into());
        w.write_record([c.id.to_string(), "sfpsf".into(), t, s, f, sup])?;
    }
    let mean = mean.map(num).unwrap_or_else(|| "NA".into());
    w.write_record(["mean", "sfpsf", "", "", "", mean.as_str()])?;
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `case,radius_mm,method,v_hr_ml,v_resampled_ml,rvd,arvd`
pub fn write_volume_csv<W: Write>(out: W, summary: &VolumeSummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "case",
        "radius_mm",
        "method",
        "v_hr_ml",
        "v_resampled_ml",
        "rvd",
        "arvd",
    ])?;
    for c in &summary.cases {
        for (method, r) in [("linear", &c.linear), ("sfpsf", &c.sfpsf)] {
            w.write_record([
                c.id.to_string(),
                num(c.radius),
                method.to_string(),
                num(r.v_hr),
                num(r.v_resampled),
                num(r.rvd),
                num(r.arvd),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `metric,value`
pub fn write_volume_summary_csv<W: Write>(out: W, summary: &VolumeSummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "value"])?;
    for (k, v) in [
        ("mean_rvd_linear", summary.mean_rvd_linear),
        ("mean_rvd_sfpsf", summary.mean_rvd_sfpsf),
        ("mean_arvd_linear", summary.mean_arvd_linear),
        ("mean_arvd_sfpsf", summary.mean_arvd_sfpsf),
        ("wilcoxon_p", summary.p_value),
    ] {
        w.write_record([k.to_string(), num(v)])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::experiments::VolumeCase;
    use crate::analysis::VolumeReport;

    #[test]
    fn volume_rows() {
        let summary = VolumeSummary {
            cases: vec![VolumeCase {
                id: 0,
                radius: 2.0,
                linear: VolumeReport::new(1.0, 0.5),
                sfpsf: VolumeReport::new(1.0, 1.25),
            }],
            mean_rvd_linear: -0.5,
            mean_rvd_sfpsf: 0.25,
            mean_arvd_linear: 0.5,
            mean_arvd_sfpsf: 0.25,
            p_value: 0.5,
        };
        let mut buf = Vec::new();
        write_volume_csv(&mut buf, &summary).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "case,radius_mm,method,v_hr_ml,v_resampled_ml,rvd,arvd\n0,2,linear,1,0.5,-0.5,0.5\n0,2,sfpsf,1,1.25,0.25,0.25\n"
        );
    }
}
