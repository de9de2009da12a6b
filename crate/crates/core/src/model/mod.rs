//! Multistage stochastic program data: stage templates, per-stage supports,
//! and the JSON instance format.

mod expand;
mod oracle;
mod random;
mod subproblem;

use serde::{Deserialize, Serialize};

use crate::ambiguity::AmbiguitySpec;
use crate::lp::Relation;
use crate::{Error, Result};

pub use expand::{binary_expand, decode_expanded, ExpandedLayout};
pub use crate::ambiguity::Risk;
pub use oracle::{exact_value_dp, ExactOracle};
pub use random::{random_instance, RandomParams};
pub use subproblem::{build_subproblem, stage_lower_bounds, ApproxFragment, LinkMode, Subproblem};

/// Rows `A x + B y + C x_prev (rel) rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintBlock {
    pub relations: Vec<Relation>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

impl ConstraintBlock {
    pub fn empty() -> Self {
        ConstraintBlock { relations: vec![], a: vec![], b: vec![], c: vec![], rhs: vec![] }
    }

    pub fn len(&self) -> usize {
        self.rhs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rhs.is_empty()
    }

    pub fn push(&mut self, a: Vec<f64>, b: Vec<f64>, c: Vec<f64>, rel: Relation, rhs: f64) {
        self.a.push(a);
        self.b.push(b);
        self.c.push(c);
        self.relations.push(rel);
        self.rhs.push(rhs);
    }

    /// Appends the rows of `other`.
    pub fn extend(&mut self, other: &ConstraintBlock) {
        self.a.extend(other.a.iter().cloned());
        self.b.extend(other.b.iter().cloned());
        self.c.extend(other.c.iter().cloned());
        self.relations.extend(other.relations.iter().copied());
        self.rhs.extend(other.rhs.iter().copied());
    }

    fn validate(&self, field: &str, d_x: usize, d_y: usize, d_prev: usize) -> Result<()> {
        let r = self.rhs.len();
        for (name, len) in [("relations", self.relations.len()), ("a", self.a.len()), ("b", self.b.len()), ("c", self.c.len())] {
            if len != r {
                return Err(Error::invalid(format!("{field}.{name}"), format!("has {len} rows, rhs has {r}")));
            }
        }
        for (name, m, w) in [("a", &self.a, d_x), ("b", &self.b, d_y), ("c", &self.c, d_prev)] {
            for (i, row) in m.iter().enumerate() {
                if row.len() != w {
                    return Err(Error::invalid(format!("{field}.{name}[{i}]"), format!("expected {w} entries, found {}", row.len())));
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid(format!("{field}.{name}[{i}]"), "non-finite coefficient"));
                }
            }
        }
        if self.rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("{field}.rhs"), "non-finite value"));
        }
        Ok(())
    }
}

/// Data of one stage under one realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageScenario {
    pub cost_x: Vec<f64>,
    pub cost_y: Vec<f64>,
    pub rows: ConstraintBlock,
    /// When nonempty the stage set is `rows ∧ (disjuncts[0] ∨ disjuncts[1] ∨ …)`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub disjuncts: Vec<ConstraintBlock>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTemplate {
    pub d_x: usize,
    pub d_y: usize,
    pub d_x_prev: usize,
    pub y_binary: Vec<bool>,
    /// `None` is an infinite upper bound; local variables are nonnegative.
    pub y_upper: Vec<Option<f64>>,
    /// One entry per realization of this stage's support.
    pub scenarios: Vec<StageScenario>,
}

impl StageTemplate {
    pub fn is_disjunctive(&self) -> bool {
        self.scenarios.iter().any(|s| !s.disjuncts.is_empty())
    }

    pub fn y_bound(&self, k: usize) -> f64 {
        self.y_upper[k].unwrap_or(f64::INFINITY)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSupport {
    pub realizations: Vec<Vec<f64>>,
    pub reference_probs: Vec<f64>,
}

impl ScenarioSupport {
    pub fn singleton(omega: Vec<f64>) -> Self {
        ScenarioSupport { realizations: vec![omega], reference_probs: vec![1.0] }
    }

    pub fn uniform(realizations: Vec<Vec<f64>>) -> Self {
        let n = realizations.len();
        ScenarioSupport { realizations, reference_probs: vec![1.0 / n as f64; n] }
    }

    pub fn len(&self) -> usize {
        self.realizations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realizations.is_empty()
    }

    /// l1 distances between realizations.
    pub fn distances(&self) -> Vec<Vec<f64>> {
        let r = &self.realizations;
        r.iter()
            .map(|a| r.iter().map(|b| a.iter().zip(b).map(|(u, v)| (u - v).abs()).sum()).collect())
            .collect()
    }

    fn validate(&self, field: &str) -> Result<()> {
        let n = self.realizations.len();
        if n == 0 {
            return Err(Error::invalid(format!("{field}.realizations"), "support is empty"));
        }
        if self.reference_probs.len() != n {
            return Err(Error::invalid(format!("{field}.reference_probs"), format!("expected {n} probabilities")));
        }
        if self.reference_probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::invalid(format!("{field}.reference_probs"), "negative probability"));
        }
        let s: f64 = self.reference_probs.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("{field}.reference_probs"), format!("sums to {s}")));
        }
        let d = self.realizations[0].len();
        if let Some(i) = self.realizations.iter().position(|w| w.len() != d) {
            return Err(Error::invalid(format!("{field}.realizations[{i}]"), "dimension differs from realization 0"));
        }
        Ok(())
    }
}

/// Optional provenance of generated instances, used to rebuild the generating law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "lowercase")]
pub enum GeneratorInfo {
    Mfip(crate::interdiction::MfipParams),
    Flip(crate::interdiction::FlipParams),
    Random(RandomParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultistageModel {
    pub horizon: usize,
    pub x0: Vec<f64>,
    pub stages: Vec<StageTemplate>,
    /// `supports[0]` is the singleton first-stage support.
    pub supports: Vec<ScenarioSupport>,
    #[serde(default)]
    pub ambiguity: AmbiguitySpec,
    /// +1 for cost minimization; -1 when the source problem is a maximization.
    #[serde(default = "one")]
    pub objective_sign: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorInfo>,
}

fn one() -> f64 {
    1.0
}

impl MultistageModel {
    pub fn stage(&self, t: usize) -> &StageTemplate {
        &self.stages[t]
    }

    pub fn scenario(&self, t: usize, i: usize) -> &StageScenario {
        &self.stages[t].scenarios[i]
    }

    pub fn num_scenarios(&self, t: usize) -> usize {
        self.supports[t].len()
    }

    pub fn validate(&self) -> Result<()> {
        let t_len = self.horizon;
        if t_len == 0 {
            return Err(Error::invalid("horizon", "must be at least 1"));
        }
        if self.stages.len() != t_len {
            return Err(Error::invalid("stages", format!("expected {t_len} stages, found {}", self.stages.len())));
        }
        if self.supports.len() != t_len {
            return Err(Error::invalid("supports", format!("expected {t_len} supports, found {}", self.supports.len())));
        }
        if self.supports[0].len() != 1 {
            return Err(Error::invalid("supports[0]", "first stage support must be a singleton"));
        }
        if self.x0.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid("x0", "initial state must be binary"));
        }
        if !(self.objective_sign == 1.0 || self.objective_sign == -1.0) {
            return Err(Error::invalid("objective_sign", "must be 1 or -1"));
        }
        let mut d_prev = self.x0.len();
        for (t, st) in self.stages.iter().enumerate() {
            let f = format!("stages[{t}]");
            if st.d_x_prev != d_prev {
                return Err(Error::invalid(format!("{f}.d_x_prev"), format!("expected {d_prev} (previous state dimension)")));
            }
            if st.y_binary.len() != st.d_y {
                return Err(Error::invalid(format!("{f}.y_binary"), format!("expected {} flags", st.d_y)));
            }
            if st.y_upper.len() != st.d_y {
                return Err(Error::invalid(format!("{f}.y_upper"), format!("expected {} bounds", st.d_y)));
            }
            for (k, u) in st.y_upper.iter().enumerate() {
                if let Some(u) = u {
                    if !(*u >= 0.0) {
                        return Err(Error::invalid(format!("{f}.y_upper[{k}]"), "must be nonnegative"));
                    }
                    if st.y_binary[k] && *u > 1.0 {
                        return Err(Error::invalid(format!("{f}.y_upper[{k}]"), "binary column bound exceeds 1"));
                    }
                }
            }
            if st.scenarios.len() != self.supports[t].len() {
                return Err(Error::invalid(
                    format!("{f}.scenarios"),
                    format!("expected {} realizations to match supports[{t}]", self.supports[t].len()),
                ));
            }
            for (i, sc) in st.scenarios.iter().enumerate() {
                let fs = format!("{f}.scenarios[{i}]");
                if sc.cost_x.len() != st.d_x || sc.cost_x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid(format!("{fs}.cost_x"), format!("expected {} finite entries", st.d_x)));
                }
                if sc.cost_y.len() != st.d_y || sc.cost_y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid(format!("{fs}.cost_y"), format!("expected {} finite entries", st.d_y)));
                }
                sc.rows.validate(&format!("{fs}.rows"), st.d_x, st.d_y, d_prev)?;
                for (h, dj) in sc.disjuncts.iter().enumerate() {
                    dj.validate(&format!("{fs}.disjuncts[{h}]"), st.d_x, st.d_y, d_prev)?;
                }
            }
            self.supports[t].validate(&format!("supports[{t}]"))?;
            d_prev = st.d_x;
        }
        self.ambiguity.validate(self)?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: MultistageModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Stage cost `f_t(x, y)` for realization data `sc`.
    pub fn stage_cost(sc: &StageScenario, x: &[f64], y: &[f64]) -> f64 {
        dot(&sc.cost_x, x) + dot(&sc.cost_y, y)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}
