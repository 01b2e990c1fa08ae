//! Model registry: parametric models addressable by compact spec strings.
//!
//! Grammar: `saturated:<n|index.json>`, `binomial:<n>`,
//! `lifted:<mapping.json>:<spec>` (the middle model is itself a spec),
//! `table:<model.json>` (polynomial entries with rational coefficients), and
//! `dist:<dist.json>` (a constant model, which lets `combine` output feed
//! `sample`).

use markov_comb::parametric::{model_lift, ParametricModel};
use markov_comb::{CategorySet, Dist};

use crate::{read_json, Failure};

pub fn parse_model(spec: &str) -> Result<ParametricModel, Failure> {
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| Failure::usage(format!("model spec {spec:?} has no `kind:` prefix")))?;
    match kind {
        "saturated" => {
            let index = match rest.parse::<usize>() {
                Ok(n) => CategorySet::range(n).map_err(Failure::domain)?,
                Err(_) => read_json::<CategorySet>(rest.as_ref())?,
            };
            Ok(ParametricModel::saturated(index))
        }
        "binomial" => {
            let n: usize = rest
                .parse()
                .map_err(|_| Failure::usage(format!("binomial spec needs a count, got {rest:?}")))?;
            Ok(ParametricModel::binomial(n))
        }
        "lifted" => {
            let (mapping, inner) = rest.split_once(':').ok_or_else(|| {
                Failure::usage("lifted spec is lifted:<mapping.json>:<spec>".to_string())
            })?;
            let p = read_json(mapping.as_ref())?;
            let h = parse_model(inner)?;
            model_lift(&p, &h).map_err(Failure::domain)
        }
        "table" => {
            let text = crate::read_text(rest.as_ref())?;
            ParametricModel::from_json_str(&text).map_err(Failure::domain)
        }
        "dist" => {
            let d: Dist = read_json(rest.as_ref())?;
            Ok(ParametricModel::constant(d))
        }
        other => Err(Failure::usage(format!(
            "unknown model kind {other:?}; expected saturated, binomial, lifted, table, or dist"
        ))),
    }
}
