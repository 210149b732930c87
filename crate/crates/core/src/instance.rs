//! Problem instances for one dispatch cycle, assignments, generators and
//! the JSON file formats.
//!
//! Scores are expected to be normalized to `[0, 1]`. Callers holding raw
//! scores in `[0, w_max]` divide by `w_max` before building an instance;
//! every additive accuracy parameter in the solvers is relative to that
//! normalization.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::rng;
use crate::valuation::{self, Driver, DriverView, ValuationKind};

/// Plain serialized form of an instance. Not validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceData {
    pub m: usize,
    pub n: usize,
    pub weights: Vec<Vec<f64>>,
    pub probs: Vec<Vec<f64>>,
}

impl InstanceData {
    /// Returns every violated invariant, or `Ok` if there are none.
    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        if self.m == 0 || self.n == 0 {
            out.push(Violation::EmptyDimension {
                m: self.m,
                n: self.n,
            });
        }
        for (name, mat) in [("weights", &self.weights), ("probs", &self.probs)] {
            if mat.len() != self.m {
                out.push(Violation::RowCount {
                    matrix: name,
                    expected: self.m,
                    found: mat.len(),
                });
            }
            for (i, row) in mat.iter().enumerate() {
                if row.len() != self.n {
                    out.push(Violation::ColumnCount {
                        matrix: name,
                        row: i,
                        expected: self.n,
                        found: row.len(),
                    });
                }
                for (j, &v) in row.iter().enumerate() {
                    // NaN fails the range check as well.
                    if !(0.0..=1.0).contains(&v) {
                        out.push(if name == "weights" {
                            Violation::WeightOutOfRange {
                                rider: i,
                                driver: j,
                                value: v,
                            }
                        } else {
                            Violation::ProbOutOfRange {
                                rider: i,
                                driver: j,
                                value: v,
                            }
                        });
                    }
                }
            }
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }
}

/// `m` riders by `n` drivers with match weights and acceptance probabilities.
///
/// Always valid: construction goes through [`InstanceData::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "InstanceData", try_from = "InstanceData")]
pub struct Instance {
    m: usize,
    n: usize,
    weights: Vec<Vec<f64>>,
    probs: Vec<Vec<f64>>,
}

impl TryFrom<InstanceData> for Instance {
    type Error = Error;

    fn try_from(d: InstanceData) -> Result<Self> {
        d.validate().map_err(Error::Invalid)?;
        Ok(Instance {
            m: d.m,
            n: d.n,
            weights: d.weights,
            probs: d.probs,
        })
    }
}

impl From<Instance> for InstanceData {
    fn from(i: Instance) -> Self {
        InstanceData {
            m: i.m,
            n: i.n,
            weights: i.weights,
            probs: i.probs,
        }
    }
}

impl Instance {
    pub fn new(weights: Vec<Vec<f64>>, probs: Vec<Vec<f64>>) -> Result<Self> {
        let m = weights.len();
        let n = weights.first().map_or(0, Vec::len);
        InstanceData {
            m,
            n,
            weights,
            probs,
        }
        .try_into()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, rider: usize, driver: usize) -> f64 {
        self.weights[rider][driver]
    }

    pub fn prob(&self, rider: usize, driver: usize) -> f64 {
        self.probs[rider][driver]
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.probs
    }

    /// Rider `rider`'s view of the given drivers, in the order given.
    pub fn view(&self, rider: usize, drivers: &[usize]) -> DriverView {
        drivers
            .iter()
            .map(|&j| Driver::new(j, self.weights[rider][j], self.probs[rider][j]))
            .collect()
    }

    /// Rider `rider`'s view of every driver.
    pub fn row_view(&self, rider: usize) -> DriverView {
        (0..self.n)
            .map(|j| Driver::new(j, self.weights[rider][j], self.probs[rider][j]))
            .collect()
    }

    /// Total welfare of an assignment under the given valuation.
    pub fn welfare(&self, assignment: &Assignment, kind: ValuationKind) -> f64 {
        assignment
            .sets
            .iter()
            .enumerate()
            .map(|(i, s)| valuation::value(kind, &self.view(i, s)))
            .sum()
    }

    /// The common acceptance probability if all entries agree within `tol`.
    pub fn homogeneous_prob(&self, tol: f64) -> Result<f64> {
        let reference = self.probs[0][0];
        for (i, row) in self.probs.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                if (p - reference).abs() > tol {
                    return Err(Error::NotHomogeneous {
                        rider: i,
                        driver: j,
                        value: p,
                        reference,
                    });
                }
            }
        }
        Ok(reference)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let data: InstanceData = serde_json::from_str(text).map_err(json_error)?;
        data.try_into()
    }

    pub fn to_json(&self) -> String {
        // serde_json prints the shortest decimal that round-trips to the same f64.
        serde_json::to_string(self).expect("instance serialization cannot fail")
    }
}

fn json_error(e: serde_json::Error) -> Error {
    use serde_json::error::Category;
    let (line, column, message) = (e.line(), e.column(), e.to_string());
    match e.classify() {
        Category::Data => Error::Schema {
            line,
            column,
            message,
        },
        _ => Error::Parse {
            line,
            column,
            message,
        },
    }
}

/// Disjoint notification sets, one per rider.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Assignment {
    pub sets: Vec<Vec<usize>>,
}

impl Assignment {
    pub fn empty(m: usize) -> Self {
        Assignment {
            sets: vec![Vec::new(); m],
        }
    }

    /// Checks the set count, index range and pairwise disjointness.
    pub fn validate(&self, m: usize, n: usize) -> Result<()> {
        if self.sets.len() != m {
            return Err(Error::InvalidAssignment(format!(
                "{} sets for {} riders",
                self.sets.len(),
                m
            )));
        }
        let mut owner = vec![None; n];
        for (i, set) in self.sets.iter().enumerate() {
            for &j in set {
                if j >= n {
                    return Err(Error::InvalidAssignment(format!(
                        "driver {j} out of range for n={n}"
                    )));
                }
                if let Some(prev) = owner[j] {
                    return Err(Error::InvalidAssignment(format!(
                        "driver {j} notified for riders {prev} and {i}"
                    )));
                }
                owner[j] = Some(i);
            }
        }
        Ok(())
    }

    /// Sorts each set so output is canonical.
    pub fn normalized(mut self) -> Self {
        for s in &mut self.sets {
            s.sort_unstable();
        }
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(json_error)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("assignment serialization cannot fail")
    }
}

/// An assignment together with its welfare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dispatch {
    pub assignment: Assignment,
    pub welfare: f64,
}

/// `m` riders and `n` drivers with all `2mn` entries i.i.d. uniform on `[0, 1)`.
///
/// Draw order: the weight matrix row by row, then the probability matrix
/// row by row, from [`rng::seeded`]`(seed)`.
pub fn gen_uniform(m: usize, n: usize, seed: u64) -> Result<Instance> {
    if m == 0 || n == 0 {
        return Err(Error::Parameter(format!("m and n must be >= 1 (m={m}, n={n})")));
    }
    let mut rng = rng::seeded(seed);
    let mut draw = || -> Vec<Vec<f64>> {
        (0..m)
            .map(|_| (0..n).map(|_| rng.gen::<f64>()).collect())
            .collect()
    };
    let weights = draw();
    let probs = draw();
    Instance::new(weights, probs)
}

/// A 3-Partition instance: `3m` integers that should split into `m`
/// triples each summing to `target`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreePartitionSpec {
    pub a: Vec<u32>,
    pub target: u32,
    pub m: usize,
}

/// Largest exponent for which `1 - 2^-a` is exact in an `f64` and `< 1`.
pub const MAX_DYADIC_EXPONENT: u32 = 52;

impl ThreePartitionSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(Error::InvalidThreePartition(s));
        if self.m == 0 {
            return bad("m must be >= 1".into());
        }
        if self.a.len() != 3 * self.m {
            return bad(format!("expected {} integers, got {}", 3 * self.m, self.a.len()));
        }
        let sum: u64 = self.a.iter().map(|&x| u64::from(x)).sum();
        if sum != self.m as u64 * u64::from(self.target) {
            return bad(format!(
                "sum {sum} != m*B = {}",
                self.m as u64 * u64::from(self.target)
            ));
        }
        for (j, &x) in self.a.iter().enumerate() {
            // B/4 < a_j < B/2 in integer arithmetic.
            if 4 * u64::from(x) <= u64::from(self.target) || 2 * u64::from(x) >= u64::from(self.target) {
                return bad(format!("a[{j}] = {x} not strictly between B/4 and B/2 (B={})", self.target));
            }
            if x > MAX_DYADIC_EXPONENT {
                return bad(format!("a[{j}] = {x} exceeds {MAX_DYADIC_EXPONENT}"));
            }
        }
        Ok(())
    }

    /// `m (1 - 2^-B)`, the best achievable welfare of the reduction.
    pub fn threshold(&self) -> f64 {
        self.m as f64 * (1.0 - (-f64::from(self.target)).exp2())
    }
}

/// Unit weights, `m` identical riders, driver `j` accepting with
/// probability `1 - 2^-a_j` (exact dyadic arithmetic).
pub fn dyadic_instance(m: usize, a: &[u32]) -> Result<Instance> {
    if m == 0 || a.is_empty() {
        return Err(Error::Parameter("need at least one rider and one driver".into()));
    }
    if let Some(&x) = a.iter().find(|&&x| x == 0 || x > MAX_DYADIC_EXPONENT) {
        return Err(Error::Parameter(format!(
            "exponent {x} outside 1..={MAX_DYADIC_EXPONENT}"
        )));
    }
    let row: Vec<f64> = a.iter().map(|&x| 1.0 - (-f64::from(x)).exp2()).collect();
    Instance::new(vec![vec![1.0; a.len()]; m], vec![row; m])
}

/// Builds the reduction instance of a 3-Partition spec together with its
/// decision threshold `W = m (1 - 2^-B)`.
pub fn gen_hardness(spec: &ThreePartitionSpec) -> Result<(Instance, f64)> {
    spec.validate()?;
    Ok((dyadic_instance(spec.m, &spec.a)?, spec.threshold()))
}
