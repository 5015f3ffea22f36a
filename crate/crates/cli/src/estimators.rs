//! Uniform entry point over the proxy and instrumental-variable estimators.

use std::fmt;
use std::str::FromStr;

use lvlingam::iv::{estimate_iv, estimate_iv_multi};
use lvlingam::proxy::{
    estimate_proxy_edge, estimate_proxy_edge_1lat, estimate_proxy_edge_1lat_refined,
    estimate_proxy_no_edge,
};
use lvlingam::{CumulantSource, Dag, Error, GraphPreset, Result, Roles};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    ProxyNoEdge,
    ProxyEdge,
    ProxyEdge1Lat,
    ProxyEdge1LatRefined,
    Iv,
    IvMulti,
}

impl Estimator {
    pub const ALL: [Estimator; 6] = [
        Estimator::ProxyNoEdge,
        Estimator::ProxyEdge,
        Estimator::ProxyEdge1Lat,
        Estimator::ProxyEdge1LatRefined,
        Estimator::Iv,
        Estimator::IvMulti,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::ProxyNoEdge => "proxy_no_edge",
            Estimator::ProxyEdge => "proxy_edge",
            Estimator::ProxyEdge1Lat => "proxy_edge_1lat",
            Estimator::ProxyEdge1LatRefined => "proxy_edge_1lat_refined",
            Estimator::Iv => "iv",
            Estimator::IvMulti => "iv_multi",
        }
    }

    pub fn is_iv(self) -> bool {
        matches!(self, Estimator::Iv | Estimator::IvMulti)
    }

    /// The estimator matching each preset's graph shape.
    pub fn default_for(preset: GraphPreset) -> Self {
        match preset {
            GraphPreset::G1 | GraphPreset::G2 => Estimator::ProxyNoEdge,
            GraphPreset::G3 => Estimator::ProxyEdge1Lat,
            GraphPreset::Proxy2LatEdge => Estimator::ProxyEdge,
            GraphPreset::Iv2T1I => Estimator::Iv,
            GraphPreset::Iv3T2I => Estimator::IvMulti,
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown estimator '{s}'")))
    }
}

/// Latent confounders of `treatment` and `outcome` according to the graph.
pub fn latent_confounders(dag: &Dag, treatment: usize, outcome: usize) -> Result<usize> {
    let a = dag.ancestors(treatment)?;
    let b = dag.ancestors(outcome)?;
    Ok(a.intersection(&b).filter(|&&v| dag.is_latent(v)).count())
}

/// Checks that the estimator fits the roles and resolves the proxy latent count, which may
/// only be lowered by `latents`.
pub fn resolve_latents(estimator: Estimator, roles: &Roles, latents: Option<usize>) -> Result<Option<usize>> {
    match (estimator.is_iv(), roles) {
        (false, Roles::Proxy { latents: derived, .. }) => {
            let l = match latents {
                Some(l) if l > *derived => {
                    return Err(Error::InvalidInput(format!(
                        "latent override {l} exceeds the {derived} latent confounders in the graph"
                    )))
                }
                Some(l) => l,
                None => *derived,
            };
            let single = matches!(estimator, Estimator::ProxyEdge1Lat | Estimator::ProxyEdge1LatRefined);
            if single && l != 1 {
                return Err(Error::InvalidInput(format!(
                    "{estimator} assumes exactly one latent confounder, got {l}"
                )));
            }
            Ok(Some(l))
        }
        (true, Roles::Iv { instruments, .. }) => {
            if estimator == Estimator::Iv && instruments.len() != 1 {
                return Err(Error::InvalidInput(format!(
                    "iv takes one instrument, got {}; use iv_multi",
                    instruments.len()
                )));
            }
            Ok(latents)
        }
        _ => Err(Error::InvalidInput(format!(
            "estimator {estimator} does not match the variable roles"
        ))),
    }
}

/// Runs `estimator` on a source holding the graph's observed variables in observed order and
/// returns one effect per treatment.
pub fn run_estimator<S: CumulantSource>(
    estimator: Estimator,
    src: &S,
    dag: &Dag,
    roles: &Roles,
    latents: Option<usize>,
) -> Result<Vec<f64>> {
    let latents = resolve_latents(estimator, roles, latents)?;
    let column = |v: usize| {
        dag.observed_index(v)
            .ok_or_else(|| Error::InvalidInput(format!("node {} is not observed", dag.name(v))))
    };
    match roles {
        Roles::Proxy {
            proxy,
            treatment,
            outcome,
            ..
        } => {
            let triple = src.select(&[column(*proxy)?, column(*treatment)?, column(*outcome)?])?;
            let l = latents.expect("resolved for proxy roles");
            let est = match estimator {
                Estimator::ProxyNoEdge => estimate_proxy_no_edge(&triple, l)?,
                Estimator::ProxyEdge => estimate_proxy_edge(&triple, l)?,
                Estimator::ProxyEdge1Lat => estimate_proxy_edge_1lat(&triple)?,
                Estimator::ProxyEdge1LatRefined => estimate_proxy_edge_1lat_refined(&triple)?,
                Estimator::Iv | Estimator::IvMulti => unreachable!("checked by resolve_latents"),
            };
            Ok(vec![est.effect])
        }
        Roles::Iv {
            instruments,
            treatments,
            outcome,
        } => {
            let est = if estimator == Estimator::Iv {
                estimate_iv(src, dag, instruments[0], treatments, *outcome, latents)?
            } else {
                estimate_iv_multi(src, dag, instruments, treatments, *outcome, latents)?
            };
            Ok(est.effects)
        }
    }
}

/// Roles from node names: `[Z, T, Y]` for proxy estimators, or
/// `[I¹..Iˢ, T¹..Tᵏ, Y]` with `instruments = s` for instrumental-variable estimators.
pub fn roles_from_names(
    dag: &Dag,
    estimator: Estimator,
    names: &[String],
    instruments: usize,
) -> Result<Roles> {
    let nodes = names
        .iter()
        .map(|n| {
            dag.node_by_name(n)
                .ok_or_else(|| Error::InvalidInput(format!("unknown node name '{n}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    if estimator.is_iv() {
        if instruments == 0 || nodes.len() < instruments + 2 {
            return Err(Error::InvalidInput(format!(
                "instrumental-variable columns need {instruments} instrument(s), at least one treatment and an outcome"
            )));
        }
        let outcome = *nodes.last().expect("nonempty");
        Ok(Roles::Iv {
            instruments: nodes[..instruments].to_vec(),
            treatments: nodes[instruments..nodes.len() - 1].to_vec(),
            outcome,
        })
    } else {
        let [proxy, treatment, outcome] = nodes[..] else {
            return Err(Error::InvalidInput(format!(
                "proxy estimators need three columns Z,T,Y, got {}",
                nodes.len()
            )));
        };
        Ok(Roles::Proxy {
            proxy,
            treatment,
            outcome,
            latents: latent_confounders(dag, treatment, outcome)?,
        })
    }
}

/// Treatments whose effects the estimator reports, in output order.
pub fn treatments(roles: &Roles) -> Vec<usize> {
    match roles {
        Roles::Proxy { treatment, .. } => vec![*treatment],
        Roles::Iv { treatments, .. } => treatments.clone(),
    }
}

pub fn outcome(roles: &Roles) -> usize {
    match roles {
        Roles::Proxy { outcome, .. } | Roles::Iv { outcome, .. } => *outcome,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for e in Estimator::ALL {
            assert_eq!(e.name().parse::<Estimator>().unwrap(), e);
        }
        assert!("ols".parse::<Estimator>().is_err());
    }

    #[test]
    fn latent_override_only_lowers() {
        let roles = GraphPreset::G2.roles();
        assert_eq!(resolve_latents(Estimator::ProxyNoEdge, &roles, Some(1)).unwrap(), Some(1));
        assert!(resolve_latents(Estimator::ProxyNoEdge, &roles, Some(3)).is_err());
        assert!(resolve_latents(Estimator::ProxyEdge1Lat, &roles, None).is_err());
        assert!(resolve_latents(Estimator::Iv, &roles, None).is_err());
    }

    #[test]
    fn roles_from_preset_names() {
        let dag = GraphPreset::G2.dag();
        let names: Vec<String> = ["Z", "T", "Y"].iter().map(|s| s.to_string()).collect();
        assert_eq!(
            roles_from_names(&dag, Estimator::ProxyNoEdge, &names, 1).unwrap(),
            GraphPreset::G2.roles()
        );
        let dag = GraphPreset::Iv3T2I.dag();
        let names: Vec<String> = ["I1", "I2", "T1", "T2", "T3", "Y"].iter().map(|s| s.to_string()).collect();
        assert_eq!(
            roles_from_names(&dag, Estimator::IvMulti, &names, 2).unwrap(),
            GraphPreset::Iv3T2I.roles()
        );
    }
}
