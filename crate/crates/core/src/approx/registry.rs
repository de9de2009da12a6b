//! Named cost-to-go approximations. Each variant decides how φ enters a stage
//! subproblem and how per-scenario cuts refine it.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{dro_separation_cut, weighted, Cut, CutKind};
use crate::ambiguity::{drr_cut_coefficients, AmbiguitySpec, Risk};
use crate::model::{ApproxFragment, MultistageModel, ScenarioSupport};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CutLayout {
    Aggregate,
    PerScenario,
}

/// Cuts approximating the expected cost-to-go held by one stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageCuts {
    pub aggregate: Vec<Cut>,
    pub per_scenario: Vec<Vec<Cut>>,
}

impl StageCuts {
    pub fn len(&self) -> usize {
        self.aggregate.len() + self.per_scenario.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub struct RefineInput<'a> {
    pub model: &'a MultistageModel,
    /// Stage whose realizations were solved; the refined cuts belong to `t - 1`.
    pub t: usize,
    pub x_hat: &'a [f64],
    /// One cut per realization of stage `t`, empty when not requested.
    pub scenario_cuts: &'a [Cut],
    pub support: &'a ScenarioSupport,
    pub ambiguity: &'a AmbiguitySpec,
    /// Current cuts and floor of stage `t` itself (the next-stage cuts seen from `t - 1`).
    pub own_cuts: Option<&'a StageCuts>,
    pub own_floor: f64,
    pub iteration: usize,
}

pub trait ValueApproximation: Send + Sync {
    fn name(&self) -> &'static str;
    fn risk(&self) -> Risk;
    fn layout(&self) -> CutLayout;

    fn fragment<'a>(&self, cuts: &'a StageCuts, floor: f64, next: &'a ScenarioSupport, amb: &AmbiguitySpec) -> ApproxFragment<'a>;

    /// Cuts to append to stage `t - 1`.
    fn refine(&self, input: &RefineInput) -> Result<Vec<Cut>>;

    fn uses_scenario_cuts(&self) -> bool {
        true
    }
}

fn epigraph<'a>(cuts: &'a StageCuts, floor: f64) -> ApproxFragment<'a> {
    ApproxFragment::Epigraph { floor, cuts: &cuts.aggregate }
}

fn tag(mut c: Cut, input: &RefineInput, scenario: Option<usize>) -> Cut {
    c.stage = input.t - 1;
    c.scenario = scenario;
    c.iteration = input.iteration;
    c
}

struct Neutral;

impl ValueApproximation for Neutral {
    fn name(&self) -> &'static str {
        "neutral"
    }
    fn risk(&self) -> Risk {
        Risk::Neutral
    }
    fn layout(&self) -> CutLayout {
        CutLayout::Aggregate
    }
    fn fragment<'a>(&self, cuts: &'a StageCuts, floor: f64, _: &'a ScenarioSupport, _: &AmbiguitySpec) -> ApproxFragment<'a> {
        epigraph(cuts, floor)
    }
    fn refine(&self, input: &RefineInput) -> Result<Vec<Cut>> {
        let c = weighted(input.scenario_cuts, &input.support.reference_probs);
        Ok(vec![tag(c, input, None)])
    }
}

struct DrrCutting;

impl ValueApproximation for DrrCutting {
    fn name(&self) -> &'static str {
        "drr-c"
    }
    fn risk(&self) -> Risk {
        Risk::Drr
    }
    fn layout(&self) -> CutLayout {
        CutLayout::Aggregate
    }
    fn fragment<'a>(&self, cuts: &'a StageCuts, floor: f64, _: &'a ScenarioSupport, _: &AmbiguitySpec) -> ApproxFragment<'a> {
        epigraph(cuts, floor)
    }
    fn refine(&self, input: &RefineInput) -> Result<Vec<Cut>> {
        let c = drr_cut_coefficients(input.scenario_cuts, input.x_hat, input.support, input.ambiguity.radius())?;
        Ok(vec![tag(c, input, None)])
    }
}

struct DroCutting;

impl ValueApproximation for DroCutting {
    fn name(&self) -> &'static str {
        "dro-c"
    }
    fn risk(&self) -> Risk {
        Risk::Dro
    }
    fn layout(&self) -> CutLayout {
        CutLayout::Aggregate
    }
    fn fragment<'a>(&self, cuts: &'a StageCuts, floor: f64, _: &'a ScenarioSupport, _: &AmbiguitySpec) -> ApproxFragment<'a> {
        epigraph(cuts, floor)
    }
    fn refine(&self, input: &RefineInput) -> Result<Vec<Cut>> {
        let c = dro_separation_cut(input.scenario_cuts, input.x_hat, input.support, input.ambiguity.radius())?;
        Ok(vec![tag(c, input, None)])
    }
}

fn per_scenario(input: &RefineInput) -> Vec<Cut> {
    input.scenario_cuts.iter().enumerate().map(|(i, c)| tag(c.clone(), input, Some(i))).collect()
}

struct DrrReformulation;

impl ValueApproximation for DrrReformulation {
    fn name(&self) -> &'static str {
        "drr-r"
    }
    fn risk(&self) -> Risk {
        Risk::Drr
    }
    fn layout(&self) -> CutLayout {
        CutLayout::PerScenario
    }
    fn fragment<'a>(&self, cuts: &'a StageCuts, _: f64, next: &'a ScenarioSupport, amb: &AmbiguitySpec) -> ApproxFragment<'a> {
        ApproxFragment::McCormick { per_scenario: &cuts.per_scenario, support: next, epsilon: amb.radius() }
    }
    fn refine(&self, input: &RefineInput) -> Result<Vec<Cut>> {
        Ok(per_scenario(input))
    }
}

struct DroReformulation;

impl ValueApproximation for DroReformulation {
    fn name(&self) -> &'static str {
        "dro-r"
    }
    fn risk(&self) -> Risk {
        Risk::Dro
    }
    fn layout(&self) -> CutLayout {
        CutLayout::PerScenario
    }
    fn fragment<'a>(&self, cuts: &'a StageCuts, _: f64, next: &'a ScenarioSupport, amb: &AmbiguitySpec) -> ApproxFragment<'a> {
        ApproxFragment::WassersteinDual { per_scenario: &cuts.per_scenario, support: next, epsilon: amb.radius() }
    }
    fn refine(&self, input: &RefineInput) -> Result<Vec<Cut>> {
        Ok(per_scenario(input))
    }
}

/// Optimistic cuts under a decision-dependent ball over a box support.
struct DrrDecisionDependent;

impl ValueApproximation for DrrDecisionDependent {
    fn name(&self) -> &'static str {
        "drr-dd"
    }
    fn risk(&self) -> Risk {
        Risk::Drr
    }
    fn layout(&self) -> CutLayout {
        CutLayout::Aggregate
    }
    fn fragment<'a>(&self, cuts: &'a StageCuts, floor: f64, _: &'a ScenarioSupport, _: &AmbiguitySpec) -> ApproxFragment<'a> {
        epigraph(cuts, floor)
    }
    fn uses_scenario_cuts(&self) -> bool {
        false
    }
    fn refine(&self, input: &RefineInput) -> Result<Vec<Cut>> {
        use crate::ddwass::{dd_cut_generate, BoxSupport, DdRadius, DdStageData};
        let data = DdStageData::from_stage(input.model, input.t)?;
        let amb = input.ambiguity;
        let support = BoxSupport {
            lower: amb.box_lower.clone().unwrap_or_default(),
            upper: amb.box_upper.clone().unwrap_or_default(),
            points: input.support.realizations.clone(),
        };
        let radius = DdRadius::from_spec(amb)?;
        let d_x = data.cost.len();
        let mut next: Vec<(Vec<f64>, f64)> = vec![(vec![0.0; d_x], if input.own_cuts.is_some() { input.own_floor } else { 0.0 })];
        if let Some(own) = input.own_cuts {
            next.extend(own.aggregate.iter().map(|c| (c.alpha.clone(), c.beta)));
        }
        let cut = dd_cut_generate(&data, &support, &radius, &next, input.x_hat)?;
        let c = Cut { stage: 0, scenario: None, alpha: cut.0, beta: cut.1, kind: CutKind::DdWasserstein, iteration: 0 };
        Ok(vec![tag(c, input, None)])
    }
}

/// Variants selectable by name.
#[derive(Clone, Default)]
pub struct Registry {
    entries: BTreeMap<String, Arc<dyn ValueApproximation>>,
}

impl Registry {
    pub fn register(&mut self, v: Arc<dyn ValueApproximation>) {
        self.entries.insert(v.name().to_string(), v);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn ValueApproximation>> {
        let key = name.replace('_', "-");
        self.entries.get(&key).cloned().ok_or_else(|| Error::UnknownVariant(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

pub fn builtin_registry() -> Registry {
    let mut r = Registry::default();
    r.register(Arc::new(Neutral));
    r.register(Arc::new(DrrCutting));
    r.register(Arc::new(DroCutting));
    r.register(Arc::new(DrrReformulation));
    r.register(Arc::new(DroReformulation));
    r.register(Arc::new(DrrDecisionDependent));
    r
}
