//! Hierarchical radon regression and the probability that every county is below the action level.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::model::{Context, Model};
use crate::real::Real;

pub const DEFAULT_COUNTIES: usize = 20;
pub const ALPHA_SD: f64 = 0.12;
pub const BETA_SD: f64 = 0.22;
/// Action level in pCi/L.
pub const ACTION_LEVEL: f64 = 4.0;
pub const TARGET_FLOOR: f64 = 1e-200;

/// Observations grouped by county, counties in name order.
#[derive(Clone, Debug, PartialEq)]
pub struct RadonData {
    pub counties: Vec<String>,
    /// Houses per county (M_i).
    pub counts: Vec<usize>,
    /// County index of each observation.
    pub county: Vec<usize>,
    /// 0 for a house with a basement, 1 without.
    pub floor: Vec<f64>,
    pub log_radon: Vec<f64>,
}

impl RadonData {
    pub fn len(&self) -> usize {
        self.log_radon.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_radon.is_empty()
    }
}

fn parse_floor(raw: &str, line: usize) -> Result<f64> {
    match raw.trim().parse::<f64>() {
        Ok(v) if v == 0.0 || v == 1.0 => Ok(v),
        _ => Err(Error::Format(format!(
            "row {line}: floor must be 0 or 1, got {raw:?}"
        ))),
    }
}

/// Parses radon CSV data and keeps the first `counties` counties by sorted name.
pub fn parse_radon_csv<Rd: Read>(reader: Rd, counties: usize) -> Result<RadonData> {
    let mut csv = csv::Reader::from_reader(reader);
    let headers = csv.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Format(format!("missing column {name:?}")))
    };
    let (c_county, c_floor, c_y) = (column("county")?, column("floor")?, column("log_radon")?);
    let mut grouped: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for (i, record) in csv.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let field = |c: usize| {
            record
                .get(c)
                .ok_or_else(|| Error::Format(format!("row {line} is short")))
        };
        let county = field(c_county)?.trim().to_owned();
        let floor = parse_floor(field(c_floor)?, line)?;
        let y: f64 = field(c_y)?
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("row {line}: log_radon is not a number")))?;
        grouped.entry(county).or_default().push((floor, y));
    }
    if grouped.len() < counties {
        return Err(Error::Data(format!(
            "need {counties} counties, found {}",
            grouped.len()
        )));
    }
    let mut data = RadonData {
        counties: vec![],
        counts: vec![],
        county: vec![],
        floor: vec![],
        log_radon: vec![],
    };
    for (index, (name, rows)) in grouped.into_iter().take(counties).enumerate() {
        data.counties.push(name);
        data.counts.push(rows.len());
        for (floor, y) in rows {
            data.county.push(index);
            data.floor.push(floor);
            data.log_radon.push(y);
        }
    }
    Ok(data)
}

pub fn load_radon_csv(path: &Path, counties: usize) -> Result<RadonData> {
    parse_radon_csv(std::fs::File::open(path)?, counties)
}

/// Log of the target: `Σ_i −softplus(5(exp(α_i) − 4))`, floored at `ln 1e−200`.
///
/// `exp(α_i)` is the predicted concentration of a house with a basement in county i.
pub fn log_target<R: Real>(alpha: &[R]) -> R {
    let mut total = R::constant(0.0);
    for a in alpha {
        total = total - ((a.exp() - ACTION_LEVEL) * 5.0).softplus();
    }
    total.floor_at(TARGET_FLOOR.ln())
}

/// Varying-intercept, varying-slope regression of log radon on the floor indicator.
#[derive(Clone, Debug, PartialEq)]
pub struct Radon {
    pub data: RadonData,
}

impl Radon {
    pub fn new(data: RadonData) -> Self {
        Radon { data }
    }

    pub fn counties(&self) -> usize {
        self.data.counties.len()
    }
}

impl Model for Radon {
    fn name(&self) -> &str {
        "radon"
    }

    fn return_arity(&self) -> usize {
        1
    }

    fn run<R: Real, C: Context<R>>(&self, ctx: &mut C) -> Result<Vec<R>> {
        let n = self.counties();
        let hyper = Distribution::normal(R::constant(0.0), R::constant(10.0))?;
        let mu_alpha = ctx.sample("mu_alpha", &hyper)?;
        let mu_beta = ctx.sample("mu_beta", &hyper)?;
        let alpha = ctx.sample_vector(
            "alpha",
            &Distribution::mv_normal_isotropic(
                vec![mu_alpha; n],
                R::constant(ALPHA_SD * ALPHA_SD),
            )?,
        )?;
        let beta = ctx.sample_vector(
            "beta",
            &Distribution::mv_normal_isotropic(vec![mu_beta; n], R::constant(BETA_SD * BETA_SD))?,
        )?;
        let eps = ctx.sample("eps", &Distribution::half_cauchy(5.0)?)?;
        if !ctx.is_prior_only() {
            let d = &self.data;
            for ((&c, &x), &y) in d.county.iter().zip(&d.floor).zip(&d.log_radon) {
                let mean = if x == 0.0 {
                    alpha[c].clone()
                } else {
                    alpha[c].clone() + beta[c].clone()
                };
                ctx.observe(&Distribution::normal(mean, eps.clone())?, y)?;
            }
        }
        Ok(vec![log_target(&alpha).exp().floor_at(TARGET_FLOOR)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_csv_groups_by_county() {
        let csv = ",county,floor,log_radon\n0,B,1,0.5\n1,A,0,1.5\n2,A,1.0,2.5\n";
        let d = parse_radon_csv(csv.as_bytes(), 2).unwrap();
        assert_eq!(d.counties, vec!["A", "B"]);
        assert_eq!(d.counts, vec![2, 1]);
        assert_eq!(d.log_radon, vec![1.5, 2.5, 0.5]);
        assert_eq!(d.floor, vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn all_floor_one_county() {
        let csv = "county,floor,log_radon\nC,1,0.1\nC,1,0.2\n";
        let d = parse_radon_csv(csv.as_bytes(), 1).unwrap();
        assert!(d.floor.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn format_and_data_errors() {
        assert!(matches!(
            parse_radon_csv("county,log_radon\nA,1\n".as_bytes(), 1),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            parse_radon_csv("county,floor,log_radon\nA,2,1\n".as_bytes(), 1),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            parse_radon_csv("county,floor,log_radon\nA,0,1\n".as_bytes(), 2),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn target_is_bounded_and_decreasing() {
        let low = log_target(&[0.0, 0.0]).exp();
        let high = log_target(&[1.5, 0.0]).exp();
        assert!(high < low && low <= 1.0);
        assert_eq!(log_target(&[10.0; 3]), TARGET_FLOOR.ln());
    }
}
