// SPDX-License-Identifier: Apache-2.0

use super::{decode, encode_pretty, FormatError};
use crate::config::ProjectConfig;

/// Decodes a project configuration and checks its invariants.
pub fn load_config(bytes: &[u8]) -> Result<ProjectConfig, FormatError> {
    let cfg: ProjectConfig = decode(bytes)?;
    if let Some((path, message)) = cfg.problems().into_iter().next() {
        return Err(FormatError::Schema { path, message });
    }
    Ok(cfg)
}

pub fn save_config(cfg: &ProjectConfig) -> Vec<u8> {
    encode_pretty(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BUNDLED: &[u8] = include_bytes!("../../assets/traffic_config.json");

    #[test]
    fn bundled_config_loads_and_is_canonical() {
        let cfg = load_config(BUNDLED).unwrap();
        assert_eq!(cfg.object_categories.len(), 34);
        assert_eq!(cfg.predicates.len(), 51);
        assert_eq!(cfg.attributes["orientation"].len(), 4);
        assert_eq!(save_config(&cfg), BUNDLED);
        assert_eq!(load_config(&save_config(&cfg)).unwrap(), cfg);
    }

    #[test]
    fn duplicate_category_is_schema_error() {
        let mut cfg = ProjectConfig::default_traffic();
        cfg.object_categories.push("car".into());
        match load_config(&save_config(&cfg)) {
            Err(FormatError::Schema { path, message }) => {
                assert_eq!(path, "object_categories[34]");
                assert!(message.contains("duplicate"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_feature_in_rule_is_schema_error() {
        let text =
            String::from_utf8(BUNDLED.to_vec()).unwrap().replacen("\"subject_inside\": true", "\"hovering\": true", 1);
        assert!(matches!(load_config(text.as_bytes()), Err(FormatError::Schema { .. })));
    }

    #[test]
    fn misspelled_key_is_schema_error() {
        let text = String::from_utf8(BUNDLED.to_vec()).unwrap().replacen("\"score_domain\"", "\"score_domian\"", 1);
        match load_config(text.as_bytes()) {
            Err(FormatError::Schema { message, .. }) => assert!(message.contains("score_domian"), "{message}"),
            other => panic!("{other:?}"),
        }
    }
}
