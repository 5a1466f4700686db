//! Indicator hierarchy and model specifications.
//!
//! A schema is a two-level tree: variables roll up into four subcategories,
//! and subcategories roll up into the two categories (pollution burden and
//! population characteristics) whose combination is the final score.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EXPOSURES: &str = "exposures";
pub const ENVIRONMENTAL_EFFECTS: &str = "environmental_effects";
pub const SENSITIVE_POPULATIONS: &str = "sensitive_populations";
pub const SOCIOECONOMIC: &str = "socioeconomic";

/// Lower and upper bound for explicit variable weights.
pub const WEIGHT_BOUNDS: (f64, f64) = (0.1, 0.9);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    PollutionBurden,
    PopulationCharacteristics,
}

impl Category {
    pub const ALL: [Category; 2] = [Category::PollutionBurden, Category::PopulationCharacteristics];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::PollutionBurden => "pollution_burden",
            Category::PopulationCharacteristics => "population_characteristics",
        }
    }
}

/// Which health-variable set a variable belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    /// Used by every model.
    #[default]
    Baseline,
    /// Only scored when the extended health set is active.
    ExtendedOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableDef {
    pub id: String,
    pub subcategory: String,
    /// Weight under the baseline health set.
    pub weight: f64,
    /// Weight under the extended health set, when it differs from `weight`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extended_weight: Option<f64>,
    #[serde(default)]
    pub membership: Membership,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcategoryDef {
    pub id: String,
    pub category: Category,
    pub weight: f64,
}

/// The weighted variable → subcategory → category tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSchema {
    pub variables: Vec<VariableDef>,
    pub subcategories: Vec<SubcategoryDef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preprocessing {
    PercentileRank,
    ZScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Multiplicative,
    Additive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HealthSet {
    #[default]
    Baseline,
    Extended,
}

fn default_threshold() -> f64 {
    0.75
}

/// One point in specification space.
///
/// `weights` holds explicit per-variable overrides; a variable without an
/// entry uses the schema weight for the active health set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub preprocessing: Preprocessing,
    pub aggregation: Aggregation,
    #[serde(default)]
    pub health_set: HealthSet,
    #[serde(default)]
    pub weights: BTreeMap<String, f64>,
    #[serde(default = "default_threshold")]
    pub threshold_quantile: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::baseline()
    }
}

impl ModelSpec {
    /// Percentile ranking, multiplicative aggregation, baseline health set.
    pub fn baseline() -> Self {
        ModelSpec {
            preprocessing: Preprocessing::PercentileRank,
            aggregation: Aggregation::Multiplicative,
            health_set: HealthSet::Baseline,
            weights: BTreeMap::new(),
            threshold_quantile: default_threshold(),
        }
    }

    pub fn new(preprocessing: Preprocessing, aggregation: Aggregation, health_set: HealthSet) -> Self {
        ModelSpec {
            preprocessing,
            aggregation,
            health_set,
            ..ModelSpec::baseline()
        }
    }

    /// Z-score standardization, additive aggregation, extended health set.
    pub fn alternative() -> Self {
        ModelSpec::new(Preprocessing::ZScore, Aggregation::Additive, HealthSet::Extended)
    }

    pub fn with_weights(mut self, weights: BTreeMap<String, f64>) -> Self {
        self.weights = weights;
        self
    }

    pub fn validate(&self, schema: &IndicatorSchema) -> Result<()> {
        if !(self.threshold_quantile > 0.0 && self.threshold_quantile < 1.0) {
            return Err(Error::InvalidInput(format!(
                "threshold_quantile {} outside (0, 1)",
                self.threshold_quantile
            )));
        }
        for (id, &w) in &self.weights {
            if schema.variable(id).is_none() {
                return Err(Error::Schema(format!("weight given for unknown variable `{id}`")));
            }
            if !(WEIGHT_BOUNDS.0..=WEIGHT_BOUNDS.1).contains(&w) {
                return Err(Error::InvalidInput(format!(
                    "weight {w} for `{id}` outside [{}, {}]",
                    WEIGHT_BOUNDS.0, WEIGHT_BOUNDS.1
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Short label such as `percentile_rank/multiplicative/baseline`.
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = match self.preprocessing {
            Preprocessing::PercentileRank => "percentile_rank",
            Preprocessing::ZScore => "z_score",
        };
        let a = match self.aggregation {
            Aggregation::Multiplicative => "multiplicative",
            Aggregation::Additive => "additive",
        };
        let h = match self.health_set {
            HealthSet::Baseline => "baseline",
            HealthSet::Extended => "extended",
        };
        write!(f, "{p}/{a}/{h}")?;
        if !self.weights.is_empty() {
            write!(f, " (+{} weights)", self.weights.len())?;
        }
        Ok(())
    }
}

fn var(id: &str, subcategory: &str) -> VariableDef {
    VariableDef {
        id: id.to_string(),
        subcategory: subcategory.to_string(),
        weight: 1.0,
        extended_weight: None,
        membership: Membership::Baseline,
    }
}

fn extended(id: &str, subcategory: &str, extended_weight: f64) -> VariableDef {
    VariableDef {
        membership: Membership::ExtendedOnly,
        extended_weight: Some(extended_weight),
        ..var(id, subcategory)
    }
}

impl IndicatorSchema {
    /// The 21-variable statewide schema plus the five survey health
    /// variables of the extended health set.
    ///
    /// Under the extended set the respiratory group (emergency-room asthma,
    /// survey asthma, COPD), the cardiovascular group (emergency-room
    /// cardiovascular, survey coronary heart disease) and low birth weight
    /// each carry a total weight of one; kidney disease and cancer enter at
    /// the weight of one baseline variable.
    pub fn ces4() -> Self {
        let mut variables: Vec<VariableDef> = [
            "ozone",
            "pm25",
            "diesel_pm",
            "drinking_water",
            "lead",
            "pesticides",
            "tox_release",
            "traffic",
        ]
        .iter()
        .map(|v| var(v, EXPOSURES))
        .collect();
        variables.extend(
            [
                "cleanup_sites",
                "groundwater_threats",
                "haz_waste",
                "imp_water_bodies",
                "solid_waste",
            ]
            .iter()
            .map(|v| var(v, ENVIRONMENTAL_EFFECTS)),
        );
        let mut asthma = var("asthma", SENSITIVE_POPULATIONS);
        asthma.extended_weight = Some(1.0 / 3.0);
        let mut cardio = var("cardiovascular", SENSITIVE_POPULATIONS);
        cardio.extended_weight = Some(0.5);
        variables.push(asthma);
        variables.push(cardio);
        variables.push(var("low_birth_weight", SENSITIVE_POPULATIONS));
        variables.extend(
            [
                "education",
                "housing_burden",
                "linguistic_isolation",
                "poverty",
                "unemployment",
            ]
            .iter()
            .map(|v| var(v, SOCIOECONOMIC)),
        );
        variables.push(extended("survey_asthma", SENSITIVE_POPULATIONS, 1.0 / 3.0));
        variables.push(extended("copd", SENSITIVE_POPULATIONS, 1.0 / 3.0));
        variables.push(extended("survey_chd", SENSITIVE_POPULATIONS, 0.5));
        variables.push(extended("kidney_disease", SENSITIVE_POPULATIONS, 1.0));
        variables.push(extended("cancer", SENSITIVE_POPULATIONS, 1.0));

        IndicatorSchema {
            variables,
            subcategories: default_subcategories(),
        }
    }

    /// A schema with `n` baseline variables spread round-robin across the
    /// four subcategories. Used by synthetic instances.
    pub fn synthetic(n: usize) -> Self {
        let subs = [EXPOSURES, ENVIRONMENTAL_EFFECTS, SENSITIVE_POPULATIONS, SOCIOECONOMIC];
        IndicatorSchema {
            variables: (0..n).map(|i| var(&format!("v{i:02}"), subs[i % 4])).collect(),
            subcategories: default_subcategories(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let schema: IndicatorSchema = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for s in &self.subcategories {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Schema(format!("duplicate subcategory `{}`", s.id)));
            }
            if !(s.weight > 0.0 && s.weight.is_finite()) {
                return Err(Error::Schema(format!("subcategory `{}` has non-positive weight", s.id)));
            }
        }
        for c in Category::ALL {
            if !self.subcategories.iter().any(|s| s.category == c) {
                return Err(Error::Schema(format!("category `{}` has no subcategory", c.as_str())));
            }
        }
        let mut vars = BTreeSet::new();
        for v in &self.variables {
            if !vars.insert(v.id.as_str()) {
                return Err(Error::Schema(format!("duplicate variable `{}`", v.id)));
            }
            if self.subcategory(&v.subcategory).is_none() {
                return Err(Error::Schema(format!(
                    "variable `{}` refers to unknown subcategory `{}`",
                    v.id, v.subcategory
                )));
            }
            let weights = [Some(v.weight), v.extended_weight];
            if weights.iter().flatten().any(|w| !(*w >= 0.0 && w.is_finite())) {
                return Err(Error::Schema(format!("variable `{}` has an invalid weight", v.id)));
            }
        }
        Ok(())
    }

    pub fn variable(&self, id: &str) -> Option<&VariableDef> {
        self.variables.iter().find(|v| v.id == id)
    }

    pub fn subcategory(&self, id: &str) -> Option<&SubcategoryDef> {
        self.subcategories.iter().find(|s| s.id == id)
    }

    pub fn variable_ids(&self) -> impl Iterator<Item = &str> {
        self.variables.iter().map(|v| v.id.as_str())
    }

    /// Variables scored under `health_set`, with their schema weight.
    pub fn active_variables(&self, health_set: HealthSet) -> Vec<(&VariableDef, f64)> {
        self.variables
            .iter()
            .filter_map(|v| match (health_set, v.membership) {
                (HealthSet::Baseline, Membership::ExtendedOnly) => None,
                (HealthSet::Baseline, Membership::Baseline) => Some((v, v.weight)),
                (HealthSet::Extended, _) => Some((v, v.extended_weight.unwrap_or(v.weight))),
            })
            .collect()
    }

    /// Effective weight of each active variable under `spec`.
    pub fn effective_weights(&self, spec: &ModelSpec) -> Vec<(&VariableDef, f64)> {
        self.active_variables(spec.health_set)
            .into_iter()
            .map(|(v, w)| (v, spec.weights.get(&v.id).copied().unwrap_or(w)))
            .collect()
    }

    /// Removes one subcategory and its variables; the parent category is
    /// then averaged over whatever remains.
    pub fn without_subcategory(&self, id: &str) -> Result<Self> {
        let target = self
            .subcategory(id)
            .ok_or_else(|| Error::Schema(format!("unknown subcategory `{id}`")))?;
        let siblings = self
            .subcategories
            .iter()
            .filter(|s| s.category == target.category && s.id != id)
            .count();
        if siblings == 0 {
            return Err(Error::Schema(format!(
                "omitting `{id}` would leave category `{}` empty",
                target.category.as_str()
            )));
        }
        Ok(IndicatorSchema {
            variables: self.variables.iter().filter(|v| v.subcategory != id).cloned().collect(),
            subcategories: self.subcategories.iter().filter(|s| s.id != id).cloned().collect(),
        })
    }

    /// Replaces variable `from` by `to`: `to` takes over `from`'s
    /// subcategory and baseline weight and becomes a baseline member.
    pub fn substitute_variable(&self, from: &str, to: &str) -> Result<Self> {
        let source = self
            .variable(from)
            .ok_or_else(|| Error::Schema(format!("unknown variable `{from}`")))?
            .clone();
        if self.variable(to).is_none() {
            return Err(Error::Schema(format!("unknown variable `{to}`")));
        }
        let variables = self
            .variables
            .iter()
            .filter(|v| v.id != from)
            .map(|v| {
                if v.id == to {
                    VariableDef {
                        id: to.to_string(),
                        membership: Membership::Baseline,
                        ..source.clone()
                    }
                } else {
                    v.clone()
                }
            })
            .collect();
        Ok(IndicatorSchema {
            variables,
            subcategories: self.subcategories.clone(),
        })
    }
}

fn default_subcategories() -> Vec<SubcategoryDef> {
    vec![
        SubcategoryDef {
            id: EXPOSURES.into(),
            category: Category::PollutionBurden,
            weight: 1.0,
        },
        SubcategoryDef {
            id: ENVIRONMENTAL_EFFECTS.into(),
            category: Category::PollutionBurden,
            weight: 0.5,
        },
        SubcategoryDef {
            id: SENSITIVE_POPULATIONS.into(),
            category: Category::PopulationCharacteristics,
            weight: 1.0,
        },
        SubcategoryDef {
            id: SOCIOECONOMIC.into(),
            category: Category::PopulationCharacteristics,
            weight: 1.0,
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ces4_has_21_baseline_variables() {
        let s = IndicatorSchema::ces4();
        s.validate().unwrap();
        assert_eq!(s.active_variables(HealthSet::Baseline).len(), 21);
        assert_eq!(s.active_variables(HealthSet::Extended).len(), 26);
    }

    #[test]
    fn environmental_effects_half_weighted() {
        let s = IndicatorSchema::ces4();
        for sub in &s.subcategories {
            let expected = if sub.id == ENVIRONMENTAL_EFFECTS { 0.5 } else { 1.0 };
            assert_eq!(sub.weight, expected);
        }
    }

    #[test]
    fn extended_health_groups_equally_weighted() {
        let s = IndicatorSchema::ces4();
        let w: BTreeMap<_, _> = s
            .active_variables(HealthSet::Extended)
            .into_iter()
            .map(|(v, w)| (v.id.as_str(), w))
            .collect();
        let respiratory = w["asthma"] + w["survey_asthma"] + w["copd"];
        let cardio = w["cardiovascular"] + w["survey_chd"];
        assert!((respiratory - 1.0).abs() < 1e-12);
        assert!((cardio - 1.0).abs() < 1e-12);
        assert_eq!(w["low_birth_weight"], 1.0);
        assert_eq!(w["kidney_disease"], 1.0);
        assert_eq!(w["cancer"], 1.0);
    }

    #[test]
    fn cannot_omit_both_subcategories_of_a_category() {
        let s = IndicatorSchema::ces4();
        let one = s.without_subcategory(EXPOSURES).unwrap();
        assert!(one.without_subcategory(ENVIRONMENTAL_EFFECTS).is_err());
    }

    #[test]
    fn spec_weight_box_enforced() {
        let s = IndicatorSchema::ces4();
        let mut spec = ModelSpec::baseline();
        spec.weights.insert("ozone".into(), 0.95);
        assert!(spec.validate(&s).is_err());
        spec.weights.insert("ozone".into(), 0.9);
        spec.validate(&s).unwrap();
        spec.weights.insert("nope".into(), 0.5);
        assert!(spec.validate(&s).is_err());
    }

    #[test]
    fn substitution_moves_weight_and_membership() {
        let s = IndicatorSchema::ces4().substitute_variable("asthma", "copd").unwrap();
        assert!(s.variable("asthma").is_none());
        let copd = s.variable("copd").unwrap();
        assert_eq!(copd.membership, Membership::Baseline);
        assert_eq!(s.active_variables(HealthSet::Baseline).len(), 21);
    }

    #[test]
    fn spec_json_defaults() {
        let spec: ModelSpec =
            serde_json::from_str(r#"{"preprocessing":"z_score","aggregation":"additive"}"#).unwrap();
        assert_eq!(spec.threshold_quantile, 0.75);
        assert_eq!(spec.health_set, HealthSet::Baseline);
    }
}
