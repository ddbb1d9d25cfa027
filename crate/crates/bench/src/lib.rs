//! Shared fixtures for the benchmarks.

use boxcox_core::model::CompositeDesign;
use boxcox_core::simulation::{gen_replicate, hypothesis_preset, HypothesisId, SimSetting, Transform};
use boxcox_core::{Dataset, LinearHypothesis, TestConfig};

/// A simulated replicate with AR(1) covariates (`rho = 0.5`) under the
/// hypothesis `beta_1 + beta_2 = 0`.
pub struct Fixture {
    pub data: Dataset,
    pub design: CompositeDesign,
    pub hypothesis: LinearHypothesis,
}

pub fn setting(n: usize, p: usize) -> SimSetting {
    SimSetting {
        n,
        p,
        rho_corr: 0.5,
        g_id: Transform::G1,
        h1: 0.0,
        hypothesis_id: HypothesisId::I,
        alpha: 0.05,
        replicates: 1,
        seed: 2024,
        baseline: false,
        test: TestConfig::default(),
    }
}

pub fn fixture(n: usize, p: usize) -> Fixture {
    let data = gen_replicate(&setting(n, p), 0).expect("simulated replicate");
    let (design, _) = CompositeDesign::from_response(data.y.as_slice(), 19).expect("dichotomized response");
    let hypothesis = hypothesis_preset(HypothesisId::I, p).expect("preset hypothesis");
    Fixture {
        data,
        design,
        hypothesis,
    }
}
