//! Train/test recipes for each evaluation scenario.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::impute::{remove_na, FittedImputer, ImputerSpec};
use crate::seeding::derive_seed;
use crate::split::{
    perturb_features, perturb_race, split_proportional, split_random, split_stratified, subsample_test, SplitPlan,
    DEFAULT_TRAIN_RATIO,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioKind {
    #[serde(rename = "RNA.rnd")]
    RnaRnd,
    #[serde(rename = "RNA.str")]
    RnaStr,
    #[serde(rename = "Imp.rnd")]
    ImpRnd,
    #[serde(rename = "Imp.str")]
    ImpStr,
    #[serde(rename = "Imp.prop")]
    ImpProp,
    #[serde(rename = "Imp.prop.frac")]
    ImpPropFrac,
    #[serde(rename = "Imp.prop.frac.perturb")]
    ImpPropFracPerturb,
    #[serde(rename = "RNA.rnd.perturb")]
    RnaRndPerturb,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 8] = [
        ScenarioKind::RnaRnd,
        ScenarioKind::RnaStr,
        ScenarioKind::ImpRnd,
        ScenarioKind::ImpStr,
        ScenarioKind::ImpProp,
        ScenarioKind::ImpPropFrac,
        ScenarioKind::ImpPropFracPerturb,
        ScenarioKind::RnaRndPerturb,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::RnaRnd => "RNA.rnd",
            ScenarioKind::RnaStr => "RNA.str",
            ScenarioKind::ImpRnd => "Imp.rnd",
            ScenarioKind::ImpStr => "Imp.str",
            ScenarioKind::ImpProp => "Imp.prop",
            ScenarioKind::ImpPropFrac => "Imp.prop.frac",
            ScenarioKind::ImpPropFracPerturb => "Imp.prop.frac.perturb",
            ScenarioKind::RnaRndPerturb => "RNA.rnd.perturb",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Complete-case scenarios take no imputer.
    pub fn removes_missing(&self) -> bool {
        matches!(self, ScenarioKind::RnaRnd | ScenarioKind::RnaStr | ScenarioKind::RnaRndPerturb)
    }

    pub fn is_perturb(&self) -> bool {
        matches!(self, ScenarioKind::ImpPropFracPerturb | ScenarioKind::RnaRndPerturb)
    }

    fn subsamples(&self) -> bool {
        matches!(self, ScenarioKind::ImpPropFrac | ScenarioKind::ImpPropFracPerturb)
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbTarget {
    Race,
    Nonsensitive,
    All,
    #[default]
    None,
}

impl PerturbTarget {
    pub fn as_str(&self) -> &'static str {
        match self {
            PerturbTarget::Race => "race",
            PerturbTarget::Nonsensitive => "nonsensitive",
            PerturbTarget::All => "all",
            PerturbTarget::None => "none",
        }
    }
}

fn default_test_fraction() -> f64 {
    0.75
}

fn default_noise_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFields {
    kind: ScenarioKind,
    #[serde(default)]
    perturb_target: PerturbTarget,
    #[serde(default = "default_test_fraction")]
    test_fraction: f64,
    #[serde(default = "default_noise_scale")]
    noise_scale: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScenarioRepr {
    Name(ScenarioKind),
    Full(ScenarioFields),
}

/// A scenario as written in a config: either the bare kind name or an
/// object with `kind` and optional `perturb_target`, `test_fraction`,
/// `noise_scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ScenarioRepr")]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub perturb_target: PerturbTarget,
    pub test_fraction: f64,
    pub noise_scale: f64,
}

impl From<ScenarioRepr> for ScenarioSpec {
    fn from(r: ScenarioRepr) -> Self {
        match r {
            ScenarioRepr::Name(kind) => ScenarioSpec::new(kind),
            ScenarioRepr::Full(f) => ScenarioSpec {
                kind: f.kind,
                perturb_target: f.perturb_target,
                test_fraction: f.test_fraction,
                noise_scale: f.noise_scale,
            },
        }
    }
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind) -> Self {
        ScenarioSpec {
            kind,
            perturb_target: PerturbTarget::None,
            test_fraction: default_test_fraction(),
            noise_scale: default_noise_scale(),
        }
    }

    pub fn perturbed(kind: ScenarioKind, target: PerturbTarget) -> Self {
        ScenarioSpec {
            perturb_target: target,
            ..Self::new(kind)
        }
    }

    /// Kind name, with `-<target>` appended for perturb scenarios.
    pub fn label(&self) -> String {
        if self.kind.is_perturb() {
            format!("{}-{}", self.kind, self.perturb_target.as_str())
        } else {
            self.kind.to_string()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let perturbing = self.perturb_target != PerturbTarget::None;
        if self.kind.is_perturb() && !perturbing {
            return Err(Error::Config(format!("{} needs a perturb_target", self.kind)));
        }
        if !self.kind.is_perturb() && perturbing {
            return Err(Error::Config(format!(
                "{} does not perturb; perturb_target must be none",
                self.kind
            )));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "test_fraction must lie in (0, 1], got {}",
                self.test_fraction
            )));
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config(format!(
                "noise_scale must be positive, got {}",
                self.noise_scale
            )));
        }
        Ok(())
    }
}

/// Result of a scenario build.
#[derive(Debug, Clone)]
pub struct ScenarioData {
    pub train: Dataset,
    pub test: Dataset,
    /// Row indices of the split, into the complete-case subset for the
    /// missing-removal kinds and into the input dataset otherwise.
    pub plan: SplitPlan,
}

fn split_for(kind: ScenarioKind, ds: &Dataset, seed: u64) -> Result<SplitPlan> {
    let s = derive_seed(seed, "scenario/split");
    match kind {
        ScenarioKind::RnaRnd | ScenarioKind::ImpRnd | ScenarioKind::RnaRndPerturb => {
            split_random(ds.n_rows(), DEFAULT_TRAIN_RATIO, s)
        }
        ScenarioKind::RnaStr | ScenarioKind::ImpStr => {
            split_stratified(ds.groups(), ds.labels(), DEFAULT_TRAIN_RATIO, s)
        }
        ScenarioKind::ImpProp | ScenarioKind::ImpPropFrac | ScenarioKind::ImpPropFracPerturb => {
            split_proportional(ds.groups(), DEFAULT_TRAIN_RATIO, s)
        }
    }
}

/// Builds the train and test sets for one scenario.
///
/// Missing-removal kinds drop incomplete rows before splitting. Imputing
/// kinds split first, fit the imputer on the training rows only and then
/// transform both sides. Subsampling and perturbation touch only the test set.
pub fn build_scenario(
    scn: &ScenarioSpec,
    ds: &Dataset,
    imputer: Option<&ImputerSpec>,
    seed: u64,
) -> Result<ScenarioData> {
    scn.validate()?;
    let (train, mut test, mut plan) = if scn.kind.removes_missing() {
        if imputer.is_some() {
            return Err(Error::Config(format!("{} takes no imputer", scn.kind)));
        }
        let complete = remove_na(ds)?;
        let plan = split_for(scn.kind, &complete, seed)?;
        (complete.select_rows(&plan.train), complete.select_rows(&plan.test), plan)
    } else {
        let spec = imputer.ok_or_else(|| Error::Config(format!("{} needs an imputer", scn.kind)))?;
        let plan = split_for(scn.kind, ds, seed)?;
        let raw_train = ds.select_rows(&plan.train);
        let raw_test = ds.select_rows(&plan.test);
        let fitted = FittedImputer::fit(spec, &raw_train, derive_seed(seed, "scenario/impute-fit"))?;
        let (train, _) = fitted.transform(&raw_train, derive_seed(seed, "scenario/impute-train"))?;
        let (test, _) = fitted.transform(&raw_test, derive_seed(seed, "scenario/impute-test"))?;
        (train, test, plan)
    };

    if scn.kind.subsamples() {
        // positions within the current test set, mapped back to source rows
        let local = SplitPlan {
            train: Vec::new(),
            test: (0..test.n_rows()).collect(),
        };
        let keep = subsample_test(&local, scn.test_fraction, derive_seed(seed, "scenario/subsample"))?.test;
        plan.test = keep.iter().map(|&i| plan.test[i]).collect();
        test = test.select_rows(&keep);
    }

    if matches!(scn.perturb_target, PerturbTarget::Nonsensitive | PerturbTarget::All) {
        let stds: Vec<f64> = train.column_moments().into_iter().map(|(_, sd)| sd).collect();
        test = perturb_features(&test, &stds, scn.noise_scale, derive_seed(seed, "scenario/perturb-features"))?;
    }
    if matches!(scn.perturb_target, PerturbTarget::Race | PerturbTarget::All) {
        test = perturb_race(&test, derive_seed(seed, "scenario/perturb-race"));
    }
    Ok(ScenarioData { train, test, plan })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::impute::Statistic;
    use crate::synth::{els_like, generate_with_missing};

    fn data() -> Dataset {
        generate_with_missing(&els_like(1500, 4)).unwrap()
    }

    fn mean() -> ImputerSpec {
        ImputerSpec::Simple {
            statistic: Statistic::Mean,
        }
    }

    #[test]
    fn config_forms() {
        let s: ScenarioSpec = serde_json::from_str(r#""Imp.prop.frac""#).unwrap();
        assert_eq!(s, ScenarioSpec::new(ScenarioKind::ImpPropFrac));
        let s: ScenarioSpec =
            serde_json::from_str(r#"{"kind":"Imp.prop.frac.perturb","perturb_target":"race"}"#).unwrap();
        assert_eq!(s.label(), "Imp.prop.frac.perturb-race");
        s.validate().unwrap();
        let s: ScenarioSpec = serde_json::from_str(r#""Imp.prop.frac.perturb""#).unwrap();
        assert!(s.validate().is_err());
        assert!(serde_json::from_str::<ScenarioSpec>(r#""Imp.random""#).is_err());
        let bad = ScenarioSpec::perturbed(ScenarioKind::ImpRnd, PerturbTarget::All);
        assert!(bad.validate().is_err());
        for k in ScenarioKind::ALL {
            assert_eq!(ScenarioKind::parse(k.as_str()), Some(k));
        }
    }

    #[test]
    fn imputer_axis_is_checked() {
        let ds = data();
        assert!(build_scenario(&ScenarioSpec::new(ScenarioKind::RnaRnd), &ds, Some(&mean()), 1).is_err());
        assert!(build_scenario(&ScenarioSpec::new(ScenarioKind::ImpRnd), &ds, None, 1).is_err());
    }

    #[test]
    fn recipes_produce_expected_shapes() {
        let ds = data();
        let complete = remove_na(&ds).unwrap();
        let rna = build_scenario(&ScenarioSpec::new(ScenarioKind::RnaRnd), &ds, None, 2).unwrap();
        assert_eq!(rna.train.n_rows() + rna.test.n_rows(), complete.n_rows());
        assert!(rna.test.is_complete());

        let imp = build_scenario(&ScenarioSpec::new(ScenarioKind::ImpRnd), &ds, Some(&mean()), 2).unwrap();
        assert_eq!(imp.test.n_rows(), ds.n_rows() - (0.8 * ds.n_rows() as f64).round() as usize);
        assert!(imp.train.is_complete() && imp.test.is_complete());
        assert!(imp.test.n_rows() > 2 * rna.test.n_rows());

        let prop = build_scenario(&ScenarioSpec::new(ScenarioKind::ImpProp), &ds, Some(&mean()), 2).unwrap();
        let frac = build_scenario(&ScenarioSpec::new(ScenarioKind::ImpPropFrac), &ds, Some(&mean()), 2).unwrap();
        assert_eq!(frac.train, prop.train);
        let expect = (0.75 * prop.test.n_rows() as f64 + 0.5).floor() as usize;
        assert_eq!(frac.test.n_rows(), expect);
        assert!(frac.plan.test.iter().all(|r| prop.plan.test.contains(r)));
    }

    #[test]
    fn perturbation_only_touches_test() {
        let ds = data();
        let base = build_scenario(&ScenarioSpec::new(ScenarioKind::ImpPropFrac), &ds, Some(&mean()), 3).unwrap();
        for target in [PerturbTarget::Race, PerturbTarget::Nonsensitive, PerturbTarget::All] {
            let scn = ScenarioSpec::perturbed(ScenarioKind::ImpPropFracPerturb, target);
            let p = build_scenario(&scn, &ds, Some(&mean()), 3).unwrap();
            assert_eq!(p.train, base.train);
            assert_eq!(p.plan, base.plan);
            assert_ne!(p.test, base.test);
            let groups_changed = p.test.groups() != base.test.groups();
            assert_eq!(groups_changed, target != PerturbTarget::Nonsensitive);
            assert_eq!(p.test.labels(), base.test.labels());
        }
        let scn = ScenarioSpec::perturbed(ScenarioKind::RnaRndPerturb, PerturbTarget::All);
        let p = build_scenario(&scn, &ds, None, 3).unwrap();
        let plain = build_scenario(&ScenarioSpec::new(ScenarioKind::RnaRnd), &ds, None, 3).unwrap();
        assert_eq!(p.train, plain.train);
        assert_ne!(p.test, plain.test);
    }

    #[test]
    fn imputer_sees_only_training_rows() {
        let ds = data();
        let specs = [
            mean(),
            ImputerSpec::Knn { k: 5 },
            ImputerSpec::Multiple {
                m: 2,
                iters: 3,
                ridge: 1e-3,
            },
        ];
        for spec in &specs {
            for kind in [ScenarioKind::ImpRnd, ScenarioKind::ImpStr, ScenarioKind::ImpProp] {
                let seed = 11;
                let built = build_scenario(&ScenarioSpec::new(kind), &ds, Some(spec), seed).unwrap();
                let train_only = ds.select_rows(&built.plan.train);
                let refit = FittedImputer::fit(spec, &train_only, derive_seed(seed, "scenario/impute-fit")).unwrap();
                let (again, _) = refit
                    .transform(&ds.select_rows(&built.plan.test), derive_seed(seed, "scenario/impute-test"))
                    .unwrap();
                assert_eq!(again, built.test, "{kind} with {}", spec.label());
                let disjoint = built.plan.train.iter().all(|r| built.plan.test.binary_search(r).is_err());
                assert!(disjoint);
            }
        }
    }

    #[test]
    fn deterministic() {
        let ds = data();
        let scn = ScenarioSpec::perturbed(ScenarioKind::ImpPropFracPerturb, PerturbTarget::All);
        let a = build_scenario(&scn, &ds, Some(&mean()), 5).unwrap();
        let b = build_scenario(&scn, &ds, Some(&mean()), 5).unwrap();
        assert_eq!(a.test, b.test);
        assert_eq!(a.plan, b.plan);
    }
}
