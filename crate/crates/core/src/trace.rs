use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Value {
    pub fn len(&self) -> usize {
        match self {
            Value::Scalar(_) => 1,
            Value::Vector(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_slice(&self) -> &[f64] {
        match self {
            Value::Scalar(x) => std::slice::from_ref(x),
            Value::Vector(v) => v,
        }
    }
}

/// One sampled variable: its address, value and prior log-density term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub address: String,
    pub value: Value,
    pub log_prior: f64,
}

/// Record of one program execution.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub entries: Vec<TraceEntry>,
    pub log_likelihood: f64,
    pub log_factors: f64,
    pub returns: Vec<f64>,
}

impl Trace {
    pub fn get(&self, address: &str) -> Option<&Value> {
        self.entries
            .iter()
            .find(|e| e.address == address)
            .map(|e| &e.value)
    }

    pub fn log_prior(&self) -> f64 {
        self.entries.iter().map(|e| e.log_prior).sum()
    }

    /// Unnormalized log-density: prior terms, likelihood terms and factors.
    pub fn log_density(&self) -> f64 {
        self.log_prior() + self.log_likelihood + self.log_factors
    }

    /// Builds a trace holding only the given values, for replay.
    pub fn from_values<S: Into<String>>(values: impl IntoIterator<Item = (S, Value)>) -> Self {
        Trace {
            entries: values
                .into_iter()
                .map(|(address, value)| TraceEntry {
                    address: address.into(),
                    value,
                    log_prior: 0.0,
                })
                .collect(),
            ..Trace::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_density_is_sum_of_components() {
        let t = Trace {
            entries: vec![
                TraceEntry {
                    address: "a".into(),
                    value: Value::Scalar(1.0),
                    log_prior: -1.5,
                },
                TraceEntry {
                    address: "b".into(),
                    value: Value::Vector(vec![0.0, 2.0]),
                    log_prior: -0.25,
                },
            ],
            log_likelihood: -3.0,
            log_factors: 0.5,
            returns: vec![],
        };
        assert_eq!(t.log_prior(), -1.75);
        assert_eq!(t.log_density(), -4.25);
        assert_eq!(t.get("b").map(Value::len), Some(2));
        assert!(t.get("c").is_none());
    }
}
