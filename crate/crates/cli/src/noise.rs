use cgmot::NoiseModel;

use crate::error::{CliError, CliResult};

/// Parses `gaussian:sigma=<s>`, `poisson` or `exact`.
pub fn parse_noise(spec: &str) -> CliResult<NoiseModel> {
    let (kind, params) = spec.split_once(':').unwrap_or((spec, ""));
    let model = match kind.trim().to_ascii_lowercase().as_str() {
        "gaussian" => {
            let sigma = params
                .split(',')
                .filter_map(|kv| kv.split_once('='))
                .find(|(k, _)| k.trim() == "sigma")
                .ok_or_else(|| CliError::Config(format!("gaussian noise needs `sigma=<value>`: {spec:?}")))?
                .1
                .trim();
            let sigma = if sigma.eq_ignore_ascii_case("inf") {
                f64::INFINITY
            } else {
                sigma.parse().map_err(|_| CliError::Config(format!("bad sigma {sigma:?}")))?
            };
            NoiseModel::Gaussian { sigma }
        }
        "poisson" if params.is_empty() => NoiseModel::Poisson,
        "exact" | "exact_marginal" if params.is_empty() => NoiseModel::ExactMarginal,
        _ => return Err(CliError::Config(format!("unknown noise model {spec:?}"))),
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_specs() {
        assert_eq!(parse_noise("gaussian:sigma=0.1").unwrap(), NoiseModel::Gaussian { sigma: 0.1 });
        assert_eq!(parse_noise("poisson").unwrap(), NoiseModel::Poisson);
        assert_eq!(parse_noise("exact").unwrap(), NoiseModel::ExactMarginal);
        assert!(parse_noise("gaussian").is_err());
        assert!(parse_noise("gaussian:sigma=-2").is_err());
        assert!(parse_noise("laplace").is_err());
    }
}
