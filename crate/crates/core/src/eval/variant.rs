//! The full model and its four ablations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowConfig, Objective};
use crate::operator::{Architecture, Head, Operator, OperatorHyper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    /// A DLinear head (linear maps on trend and season) inside the flow trainer.
    WoNeuralOperator,
    /// The operator as a direct map from history to future.
    WoFlowMatching,
    /// Identity normalization.
    WoNormalization,
    /// One branch on the undecomposed history.
    WoSpectralDecomposition,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::WoNeuralOperator,
        Variant::WoFlowMatching,
        Variant::WoNormalization,
        Variant::WoSpectralDecomposition,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WoNeuralOperator => "wo_neural_operator",
            Variant::WoFlowMatching => "wo_flow_matching",
            Variant::WoNormalization => "wo_normalization",
            Variant::WoSpectralDecomposition => "wo_spectral_decomposition",
        }
    }

    /// The architecture and flow settings this variant runs with.
    pub fn apply(self, arch: &Architecture, flow: &FlowConfig) -> (Architecture, FlowConfig) {
        let (mut arch, mut flow) = (*arch, *flow);
        match self {
            Variant::Full => {}
            Variant::WoNeuralOperator => arch.head = Head::Linear,
            Variant::WoFlowMatching => flow.objective = Objective::Direct,
            Variant::WoNormalization => arch.normalize = false,
            Variant::WoSpectralDecomposition => arch.decompose = false,
        }
        (arch, flow)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
            Error::usage(format!("unknown variant '{s}'; expected one of {}", names.join(", ")))
        })
    }
}

/// Initializes the operator for `variant` and returns it with its flow settings.
pub fn build_variant(
    variant: Variant,
    hyper: OperatorHyper,
    base_arch: &Architecture,
    base_flow: &FlowConfig,
    seed: u64,
) -> Result<(Operator, FlowConfig)> {
    let (arch, flow) = variant.apply(base_arch, base_flow);
    flow.validate()?;
    Ok((Operator::new(hyper, arch, seed)?, flow))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::predict;
    use crate::numerics::RealTensor;

    fn hyper() -> OperatorHyper {
        OperatorHyper {
            k: 4,
            top_k: 2,
            m_max: 6,
            hidden: 16,
            eps_norm: 1e-5,
        }
    }

    #[test]
    fn names_roundtrip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{v}\""));
        }
        let err = "wo_everything".parse::<Variant>().unwrap_err();
        assert_eq!(err.class(), crate::ErrorClass::Usage);
    }

    #[test]
    fn variant_structure() {
        let arch = Architecture::new(96, 96, 7);
        let flow = FlowConfig::default();
        let build = |v| build_variant(v, OperatorHyper::default(), &arch, &flow, 1).unwrap();
        let (full, _) = build(Variant::Full);
        let (lin, lin_flow) = build(Variant::WoNeuralOperator);
        assert_eq!(lin.arch.head, Head::Linear);
        assert_eq!(lin_flow.objective, Objective::FlowMatching);
        assert!(lin.num_params() * 4 < full.num_params());
        assert_eq!(build(Variant::WoFlowMatching).1.objective, Objective::Direct);
        assert!(!build(Variant::WoNormalization).0.arch.normalize);
        assert_eq!(build(Variant::WoSpectralDecomposition).0.arch.branches(), vec!["full"]);
    }

    #[test]
    fn wo_flow_matching_is_a_single_forward() {
        let arch = Architecture::new(12, 8, 2);
        let (op, flow) = build_variant(Variant::WoFlowMatching, hyper(), &arch, &FlowConfig::default(), 4).unwrap();
        let h = RealTensor::from_fn(&[12, 2], |i| (i as f64 * 0.4).sin());
        let h_emb = op.history_embedding(&h).unwrap();
        assert_eq!(predict(&op, &h, &flow).unwrap(), op.forward(&h, &h_emb, 0.0).unwrap());
    }

    #[test]
    fn wo_normalization_breaks_shift_equivariance() {
        let arch = Architecture::new(12, 8, 2);
        let h = RealTensor::from_fn(&[12, 2], |i| (i as f64 * 0.4).sin() + 0.1 * i as f64);
        let shifted = h.map(|v| 3.0 * v + 5.0);
        let gap = |v| {
            let (op, flow) = build_variant(v, hyper(), &arch, &FlowConfig::default(), 4).unwrap();
            let a = predict(&op, &h, &flow).unwrap().map(|y| 3.0 * y + 5.0);
            predict(&op, &shifted, &flow).unwrap().max_abs_diff(&a)
        };
        assert!(gap(Variant::Full) < 1e-8);
        assert!(gap(Variant::WoNormalization) > 1e-3);
    }
}
