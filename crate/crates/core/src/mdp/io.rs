//! JSON model files:
//! `{"n_states", "n_actions", "gamma", "reward": [[..]], "transition": [[[..]]]}`
//! with `transition` indexed `[s][a][s']`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dmdp, TabularModel};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct MdpFile {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    reward: Vec<Vec<f64>>,
    transition: Vec<Vec<Vec<f64>>>,
}

pub fn to_json_string(mdp: &Dmdp) -> String {
    let (n, k) = (mdp.n_states(), mdp.n_actions());
    let file = MdpFile {
        n_states: n,
        n_actions: k,
        gamma: mdp.gamma(),
        reward: (0..n).map(|s| (0..k).map(|a| mdp.reward(s, a)).collect()).collect(),
        transition: (0..n)
            .map(|s| (0..k).map(|a| mdp.transition_row(s, a).to_vec()).collect())
            .collect(),
    };
    serde_json::to_string(&file).expect("finite model serializes")
}

/// Parses and validates a model document.
pub fn from_json_str(text: &str) -> Result<Dmdp> {
    let file: MdpFile = serde_json::from_str(text)?;
    if file.reward.len() != file.n_states {
        return Err(Error::Dimension { what: "reward states", expected: file.n_states, got: file.reward.len() });
    }
    if let Some(row) = file.reward.iter().find(|r| r.len() != file.n_actions) {
        return Err(Error::Dimension { what: "reward actions", expected: file.n_actions, got: row.len() });
    }
    if file.transition.len() != file.n_states {
        return Err(Error::Dimension {
            what: "transition states",
            expected: file.n_states,
            got: file.transition.len(),
        });
    }
    Dmdp::from_nested(file.gamma, &file.reward, &file.transition)
}

pub fn save(mdp: &Dmdp, path: impl AsRef<Path>) -> Result<()> {
    let mut text = to_json_string(mdp);
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Dmdp> {
    from_json_str(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{generate_random, RandomSpec, Violation};
    use proptest::prelude::*;

    #[test]
    fn negative_probability_rejected() {
        let text = r#"{"n_states":2,"n_actions":1,"gamma":0.9,"reward":[[0.1],[0.2]],
                      "transition":[[[1.5,-0.5]],[[0.5,0.5]]]}"#;
        match from_json_str(text) {
            Err(Error::InvalidModel(v)) => {
                assert!(v.iter().any(|x| matches!(x, Violation::NegativeProbability { .. })))
            }
            other => panic!("expected stochasticity error, got {other:?}"),
        }
    }

    #[test]
    fn missing_gamma_names_field() {
        let text = r#"{"n_states":1,"n_actions":1,"reward":[[0.1]],"transition":[[[1.0]]]}"#;
        let err = from_json_str(text).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        assert!(err.to_string().contains("gamma"), "{err}");
    }

    #[test]
    fn non_finite_numbers_rejected() {
        let text = r#"{"n_states":1,"n_actions":1,"gamma":0.9,"reward":[[NaN]],"transition":[[[1.0]]]}"#;
        assert!(from_json_str(text).is_err());
        let text = r#"{"n_states":1,"n_actions":1,"gamma":0.9,"reward":[[1e999]],"transition":[[[1.0]]]}"#;
        assert!(from_json_str(text).is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let text = r#"{"n_states":2,"n_actions":1,"gamma":0.9,"reward":[[0.1]],"transition":[[[1.0]]]}"#;
        assert!(matches!(from_json_str(text), Err(Error::Dimension { .. })));
    }

    #[test]
    fn file_round_trip() {
        let m = generate_random(&RandomSpec { n_states: 5, n_actions: 3, gamma: 0.93, concentration: 0.5, seed: 9 })
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save(&m, &path).unwrap();
        assert_eq!(load(&path).unwrap(), m);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn json_round_trip_is_bit_exact(
            n in 1usize..6, k in 1usize..4, gamma in 0.01f64..0.99, conc in 0.05f64..5.0, seed: u64
        ) {
            let m = generate_random(&RandomSpec { n_states: n, n_actions: k, gamma, concentration: conc, seed }).unwrap();
            let back = from_json_str(&to_json_string(&m)).unwrap();
            prop_assert_eq!(back.gamma().to_bits(), m.gamma().to_bits());
            prop_assert!(back.transitions().iter().zip(m.transitions()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert!(back.rewards().iter().zip(m.rewards()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
