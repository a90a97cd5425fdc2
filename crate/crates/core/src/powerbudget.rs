//! Optical loss of reflective EAST-WEST paths and ITU budget classification.
//!
//! A reflected signal crosses every splitter on its way twice, once towards
//! the reflection point (an FBG at the level-1 or level-2 splitter) and once
//! back down. EDFA gain is lumped into a single subtraction at the
//! reflection point, and connector loss is charged once per path.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::SplitterSpec;

#[derive(Debug, Error, PartialEq)]
pub enum BudgetError {
    #[error("reflection at level 2 requires a second-stage splitter")]
    MissingStage2,
    #[error("unknown splitter `{0}`")]
    UnknownSplitter(String),
    #[error("unknown budget class `{0}`")]
    UnknownClass(String),
    #[error("invalid budget parameters: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetClass {
    pub name: String,
    pub max_loss_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetParams {
    pub fbg_loss_db: f64,
    /// Overall connector loss of the end-to-end path.
    pub connector_loss_db: f64,
    /// Includes splice loss.
    pub fiber_loss_db_per_km: f64,
    pub splitters: Vec<SplitterSpec>,
    /// Sorted by strictly increasing threshold.
    pub classes: Vec<BudgetClass>,
    /// Lumped gain of an EDFA at the level-1 reflection point. Not published
    /// directly; 15 dB is the flat offset between the amplified and
    /// unamplified first-stage losses of the reference table.
    pub level1_edfa_gain_db: f64,
    pub drop_km: f64,
    pub trunk_km: f64,
}

impl Default for BudgetParams {
    fn default() -> Self {
        Self {
            fbg_loss_db: 2.0,
            connector_loss_db: 1.0,
            fiber_loss_db_per_km: 0.3,
            splitters: vec![
                SplitterSpec::passive(4, 4, 7.3),
                SplitterSpec::passive(4, 8, 10.75),
                SplitterSpec::passive(4, 16, 14.03),
                SplitterSpec::passive(4, 32, 17.33),
            ],
            classes: [("N1", 29.0), ("N2", 31.0), ("E1", 33.0), ("E2", 35.0)]
                .into_iter()
                .map(|(name, max_loss_db)| BudgetClass {
                    name: name.into(),
                    max_loss_db,
                })
                .collect(),
            level1_edfa_gain_db: 15.0,
            drop_km: 0.5,
            trunk_km: 10.0,
        }
    }
}

impl BudgetParams {
    pub fn validate(&self) -> Result<(), BudgetError> {
        let invalid = |m: &str| Err(BudgetError::InvalidParams(m.into()));
        if [self.fbg_loss_db, self.connector_loss_db, self.fiber_loss_db_per_km]
            .iter()
            .any(|v| !(*v >= 0.0))
        {
            return invalid("losses must be non-negative");
        }
        if self.splitters.iter().any(|s| !(s.one_way_loss_db >= 0.0)) {
            return invalid("splitter losses must be non-negative");
        }
        if self.classes.is_empty() {
            return invalid("at least one budget class is required");
        }
        if self
            .classes
            .windows(2)
            .any(|w| !(w[0].max_loss_db < w[1].max_loss_db))
        {
            return invalid("class thresholds must be strictly increasing");
        }
        if !(self.drop_km >= 0.0 && self.trunk_km >= 0.0 && self.level1_edfa_gain_db >= 0.0) {
            return invalid("distances and gains must be non-negative");
        }
        Ok(())
    }

    /// Looks a splitter up by its `NxM` label.
    pub fn splitter(&self, label: &str) -> Result<&SplitterSpec, BudgetError> {
        self.splitters
            .iter()
            .find(|s| s.label() == label)
            .ok_or_else(|| BudgetError::UnknownSplitter(label.into()))
    }

    pub fn class(&self, name: &str) -> Result<&BudgetClass, BudgetError> {
        self.classes
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| BudgetError::UnknownClass(name.into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReflectAt {
    Level1,
    Level2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub stage1: SplitterSpec,
    pub stage2: Option<SplitterSpec>,
    pub drop_km: f64,
    pub trunk_km: f64,
    pub reflect_at: ReflectAt,
    pub edfa_gain_db: f64,
}

impl PathSpec {
    pub fn level1(stage1: SplitterSpec, drop_km: f64) -> Self {
        Self {
            stage1,
            stage2: None,
            drop_km,
            trunk_km: 0.0,
            reflect_at: ReflectAt::Level1,
            edfa_gain_db: 0.0,
        }
    }

    pub fn level2(stage1: SplitterSpec, stage2: SplitterSpec, drop_km: f64, trunk_km: f64) -> Self {
        Self {
            stage1,
            stage2: Some(stage2),
            drop_km,
            trunk_km,
            reflect_at: ReflectAt::Level2,
            edfa_gain_db: 0.0,
        }
    }

    pub fn with_edfa(mut self, gain_db: f64) -> Self {
        self.edfa_gain_db = gain_db;
        self
    }
}

/// End-to-end loss of a reflective EAST-WEST path. Negative results (EDFA
/// gain larger than the passive loss) are returned as-is.
pub fn east_west_loss_db(path: &PathSpec, params: &BudgetParams) -> Result<f64, BudgetError> {
    let fixed = params.fbg_loss_db + params.connector_loss_db;
    let passive = match path.reflect_at {
        ReflectAt::Level1 => {
            2.0 * path.stage1.one_way_loss_db
                + 2.0 * path.drop_km * params.fiber_loss_db_per_km
                + fixed
        }
        ReflectAt::Level2 => {
            let stage2 = path.stage2.as_ref().ok_or(BudgetError::MissingStage2)?;
            2.0 * path.stage1.one_way_loss_db
                + 2.0 * stage2.one_way_loss_db
                + (2.0 * path.trunk_km + 2.0 * path.drop_km) * params.fiber_loss_db_per_km
                + fixed
        }
    };
    Ok(passive - path.edfa_gain_db)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Class(String),
    Infeasible,
}

impl Classification {
    pub fn label(&self) -> &str {
        match self {
            Classification::Class(name) => name,
            Classification::Infeasible => "Infeasible",
        }
    }
}

/// Smallest class whose threshold admits the loss; thresholds are inclusive.
pub fn classify_budget(loss_db: f64, params: &BudgetParams) -> Classification {
    params
        .classes
        .iter()
        .find(|c| loss_db <= c.max_loss_db)
        .map_or(Classification::Infeasible, |c| Classification::Class(c.name.clone()))
}

/// Whole-dB EDFA gain needed to bring the path into `target_class`,
/// ignoring any gain already set on the path.
pub fn required_edfa_gain_db(
    path: &PathSpec,
    params: &BudgetParams,
    target_class: &str,
) -> Result<f64, BudgetError> {
    let target = params.class(target_class)?;
    let passive = east_west_loss_db(&path.clone().with_edfa(0.0), params)?;
    let excess = passive - target.max_loss_db;
    // Guard against 16.000000001-style rounding noise before the ceiling.
    Ok((excess - 1e-9).ceil().max(0.0))
}

/// One line of the budget report: one splitter configuration, one reflection point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub total_split: u32,
    pub configuration: String,
    pub reflect_at: ReflectAt,
    pub loss_db: f64,
    pub class: String,
    pub edfa_gain_db: f64,
    pub loss_with_edfa_db: f64,
    pub class_with_edfa: String,
    pub required_gain_db: f64,
}

/// Splitter pairs of the reference loss table: `(level-1, level-2)`.
pub const REFERENCE_CONFIGURATIONS: [(&str, &str); 4] =
    [("4x8", "4x4"), ("4x16", "4x4"), ("4x32", "4x4"), ("4x16", "4x8")];

/// A level-1 splitter and, optionally, the level-2 splitter above it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitterConfiguration {
    pub level1: String,
    #[serde(default)]
    pub level2: Option<String>,
}

/// Evaluates every configuration at the level-1 reflection point and, when a
/// level-2 splitter is given, at the level-2 one. Level-1 rows apply the
/// fixed level-1 EDFA gain; level-2 rows apply the gain required to reach
/// `target_class`. Level-1 rows come first.
pub fn budget_table(
    configurations: &[SplitterConfiguration],
    params: &BudgetParams,
    target_class: &str,
) -> Result<Vec<BudgetRow>, BudgetError> {
    params.validate()?;
    let mut level1_rows = Vec::new();
    let mut level2_rows = Vec::new();
    for cfg in configurations {
        let stage1 = params.splitter(&cfg.level1)?.clone();
        let stage2 = cfg.level2.as_deref().map(|l2| params.splitter(l2)).transpose()?;
        let total_split = stage1.ports_out * stage2.map_or(1, |s| s.ports_out);
        let configuration = match &cfg.level2 {
            Some(l2) => format!("{}-{l2}", cfg.level1),
            None => cfg.level1.clone(),
        };

        let p1 = PathSpec::level1(stage1.clone(), params.drop_km);
        level1_rows.push(budget_row(total_split, &configuration, p1, params, target_class)?);
        if let Some(stage2) = stage2 {
            let p2 = PathSpec::level2(stage1, stage2.clone(), params.drop_km, params.trunk_km);
            level2_rows.push(budget_row(total_split, &configuration, p2, params, target_class)?);
        }
    }
    level1_rows.extend(level2_rows);
    Ok(level1_rows)
}

fn budget_row(
    total_split: u32,
    configuration: &str,
    path: PathSpec,
    params: &BudgetParams,
    target_class: &str,
) -> Result<BudgetRow, BudgetError> {
    let loss_db = east_west_loss_db(&path, params)?;
    let required_gain_db = required_edfa_gain_db(&path, params, target_class)?;
    let edfa_gain_db = match path.reflect_at {
        ReflectAt::Level1 => params.level1_edfa_gain_db,
        ReflectAt::Level2 => required_gain_db,
    };
    let loss_with_edfa_db = loss_db - edfa_gain_db;
    Ok(BudgetRow {
        total_split,
        configuration: configuration.to_string(),
        reflect_at: path.reflect_at,
        loss_db,
        class: classify_budget(loss_db, params).label().to_string(),
        edfa_gain_db,
        loss_with_edfa_db,
        class_with_edfa: classify_budget(loss_with_edfa_db, params).label().to_string(),
        required_gain_db,
    })
}

pub fn reference_configurations() -> Vec<SplitterConfiguration> {
    REFERENCE_CONFIGURATIONS
        .iter()
        .map(|(a, b)| SplitterConfiguration {
            level1: a.to_string(),
            level2: Some(b.to_string()),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> BudgetParams {
        BudgetParams::default()
    }

    fn sp(label: &str) -> SplitterSpec {
        p().splitter(label).unwrap().clone()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn level1_4x8_unamplified() {
        let loss = east_west_loss_db(&PathSpec::level1(sp("4x8"), 0.5), &p()).unwrap();
        assert!(close(loss, 24.8), "{loss}");
    }

    #[test]
    fn level2_4x16_with_23db_edfa() {
        let path = PathSpec::level2(sp("4x16"), sp("4x4"), 0.5, 10.0).with_edfa(23.0);
        let loss = east_west_loss_db(&path, &p()).unwrap();
        assert!(close(loss, 28.96), "{loss}");
    }

    #[test]
    fn lossless_plant_leaves_fbg_and_connector() {
        let zero = SplitterSpec::passive(1, 1, 0.0);
        let loss = east_west_loss_db(&PathSpec::level1(zero.clone(), 0.0), &p()).unwrap();
        assert!(close(loss, 3.0));
        let loss = east_west_loss_db(&PathSpec::level2(zero.clone(), zero, 0.0, 0.0), &p()).unwrap();
        assert!(close(loss, 3.0));
    }

    #[test]
    fn level2_without_stage2_is_rejected() {
        let mut path = PathSpec::level1(sp("4x8"), 0.5);
        path.reflect_at = ReflectAt::Level2;
        assert_eq!(east_west_loss_db(&path, &p()), Err(BudgetError::MissingStage2));
    }

    #[test]
    fn excessive_gain_reports_negative_loss() {
        let path = PathSpec::level1(sp("4x8"), 0.5).with_edfa(30.0);
        assert!(east_west_loss_db(&path, &p()).unwrap() < 0.0);
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify_budget(31.36, &p()), Classification::Class("E1".into()));
        assert_eq!(classify_budget(37.96, &p()), Classification::Infeasible);
        assert_eq!(classify_budget(29.0, &p()), Classification::Class("N1".into()));
        assert_eq!(classify_budget(29.01, &p()), Classification::Class("N2".into()));
        assert_eq!(classify_budget(35.0, &p()), Classification::Class("E2".into()));
    }

    #[test]
    fn required_gains_for_n1() {
        let cases = [("4x8", "4x4", 17.0), ("4x16", "4x4", 23.0), ("4x32", "4x4", 30.0), ("4x16", "4x8", 30.0)];
        for (l1, l2, want) in cases {
            let path = PathSpec::level2(sp(l1), sp(l2), 0.5, 10.0);
            assert_eq!(required_edfa_gain_db(&path, &p(), "N1").unwrap(), want, "{l1}-{l2}");
        }
        let inside = PathSpec::level1(sp("4x8"), 0.5);
        assert_eq!(required_edfa_gain_db(&inside, &p(), "N1").unwrap(), 0.0);
        assert!(required_edfa_gain_db(&inside, &p(), "X9").is_err());
    }

    #[test]
    fn reference_table_has_eight_rows() {
        let rows = budget_table(&reference_configurations(), &p(), "N1").unwrap();
        assert_eq!(rows.len(), 8);
        assert!(rows[..4].iter().all(|r| r.reflect_at == ReflectAt::Level1));
        assert!(rows[4..].iter().all(|r| r.class_with_edfa == "N1"));
    }

    #[test]
    fn custom_level1_only_splitter() {
        let mut params = p();
        params.splitters.push(SplitterSpec::passive(2, 2, 4.0));
        let cfg = [SplitterConfiguration { level1: "2x2".into(), level2: None }];
        let rows = budget_table(&cfg, &params, "N1").unwrap();
        assert_eq!(rows.len(), 1);
        assert!(close(rows[0].loss_db, 11.3));
        assert_eq!(rows[0].class, "N1");
    }

    #[test]
    fn rejects_non_increasing_classes() {
        let mut params = p();
        params.classes[1].max_loss_db = 29.0;
        assert!(params.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn drop_length_is_additive(base in 0.0f64..5.0, delta in 0.0f64..5.0, l2 in any::<bool>()) {
                let mk = |d: f64| if l2 {
                    PathSpec::level2(sp("4x16"), sp("4x4"), d, 10.0)
                } else {
                    PathSpec::level1(sp("4x16"), d)
                };
                let a = east_west_loss_db(&mk(base), &p()).unwrap();
                let b = east_west_loss_db(&mk(base + delta), &p()).unwrap();
                prop_assert!((b - a - 2.0 * delta * 0.3).abs() < 1e-9);
            }

            #[test]
            fn classification_is_monotone(a in -10.0f64..60.0, b in -10.0f64..60.0) {
                let rank = |c: Classification| match c {
                    Classification::Class(n) => p().classes.iter().position(|k| k.name == n).unwrap(),
                    Classification::Infeasible => usize::MAX,
                };
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(rank(classify_budget(lo, &p())) <= rank(classify_budget(hi, &p())));
            }
        }
    }
}
