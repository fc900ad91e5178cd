//! TOML config schema for [`SystemSpec`].
//!
//! Two forms are accepted. Explicit:
//!
//! ```toml
//! dimension = 2
//! t0 = 0.0
//!
//! [linear.entry.1.2]
//! offset = 1.0
//!
//! [linear.entry.2.1]
//! offset = -4.0
//! [[linear.entry.2.1.term]]
//! amplitude = -0.5
//! frequency = 3.14159
//! phase = 0.0
//! kind = "sin"
//!
//! [[nonlinear.term]]
//! component = 2
//! coefficient = -0.1
//! exponents = [0, 3]
//!
//! [forcing.2]
//! offset = 0.0
//! [[forcing.2.term]]
//! amplitude = 0.01
//! frequency = 6.28318
//! phase = 0.0
//! kind = "sin"
//! ```
//!
//! Entry and component indices are 1-based; missing matrix entries and
//! forcing components default to zero. Or the benchmark preset:
//!
//! ```toml
//! [preset]
//! name = "vdp"
//! omega0 = 2.0
//! alpha1 = 0.2
//! alpha2 = 0.1
//! a1 = 0.5
//! a2 = 0.5
//! r1 = 3.14159
//! r2 = 7.0
//! a = 0.0
//! omega2 = 6.28318
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Deserialize;

use super::{
    vdp_preset, HarmonicTerm, MatrixFunctionSpec, ModelError, PolyTerm, PolynomialVectorField,
    QuasiPeriodicScalar, SystemSpec, TermKind, VdpParams,
};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    dimension: Option<usize>,
    t0: Option<f64>,
    preset: Option<RawPreset>,
    linear: Option<RawLinear>,
    nonlinear: Option<RawNonlinear>,
    forcing: Option<BTreeMap<String, RawQps>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPreset {
    name: String,
    omega0: Option<f64>,
    alpha1: Option<f64>,
    alpha2: Option<f64>,
    a1: Option<f64>,
    a2: Option<f64>,
    r1: Option<f64>,
    r2: Option<f64>,
    a: Option<f64>,
    omega2: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLinear {
    entry: BTreeMap<String, BTreeMap<String, RawQps>>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawQps {
    offset: Option<f64>,
    term: Option<Vec<RawTerm>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTerm {
    amplitude: f64,
    frequency: f64,
    phase: Option<f64>,
    kind: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNonlinear {
    term: Vec<RawPolyTerm>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolyTerm {
    component: usize,
    coefficient: f64,
    exponents: Vec<u32>,
}

fn parse_index(key: &str, what: &str) -> Result<usize, ModelError> {
    key.parse::<usize>()
        .ok()
        .filter(|&i| i >= 1)
        .ok_or_else(|| ModelError::Parse(format!("{what} index `{key}` is not a positive integer")))
}

fn build_qps(raw: &RawQps, at: &str) -> Result<QuasiPeriodicScalar, ModelError> {
    let mut terms = Vec::new();
    for (idx, t) in raw.term.as_deref().unwrap_or(&[]).iter().enumerate() {
        let kind = match t.kind.as_str() {
            "sin" => TermKind::Sin,
            "cos" => TermKind::Cos,
            other => {
                return Err(ModelError::Parse(format!(
                    "{at}.term[{idx}].kind: expected \"sin\" or \"cos\", got \"{other}\""
                )))
            }
        };
        terms.push(HarmonicTerm {
            amplitude: t.amplitude,
            frequency: t.frequency,
            phase: t.phase.unwrap_or(0.0),
            kind,
        });
    }
    Ok(QuasiPeriodicScalar { offset: raw.offset.unwrap_or(0.0), terms })
}

/// Parses a TOML config document into a [`SystemSpec`].
pub fn parse_config(text: &str) -> Result<SystemSpec, ModelError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;

    if let Some(preset) = &raw.preset {
        if raw.linear.is_some() || raw.nonlinear.is_some() || raw.forcing.is_some() {
            return Err(ModelError::Parse(
                "`preset` cannot be combined with explicit `linear`/`nonlinear`/`forcing` sections"
                    .into(),
            ));
        }
        if preset.name != "vdp" {
            return Err(ModelError::Parse(format!("unknown preset name `{}`", preset.name)));
        }
        let d = VdpParams::default();
        let mut spec = vdp_preset(VdpParams {
            omega0: preset.omega0.unwrap_or(d.omega0),
            alpha1: preset.alpha1.unwrap_or(d.alpha1),
            alpha2: preset.alpha2.unwrap_or(d.alpha2),
            a1: preset.a1.unwrap_or(d.a1),
            a2: preset.a2.unwrap_or(d.a2),
            r1: preset.r1.unwrap_or(d.r1),
            r2: preset.r2.unwrap_or(d.r2),
            a: preset.a.unwrap_or(d.a),
            omega2: preset.omega2.unwrap_or(d.omega2),
        });
        if let Some(t0) = raw.t0 {
            spec.t0 = t0;
        }
        return Ok(spec);
    }

    let n = raw
        .dimension
        .ok_or_else(|| ModelError::Parse("missing `dimension` (or a `preset` section)".into()))?;
    if n == 0 {
        return Err(ModelError::Parse("`dimension` must be positive".into()));
    }

    let mut linear = MatrixFunctionSpec::zero(n);
    if let Some(raw_linear) = &raw.linear {
        for (row_key, cols) in &raw_linear.entry {
            let i = parse_index(row_key, "linear.entry row")?;
            if i > n {
                return Err(ModelError::Validation(format!(
                    "linear.entry.{row_key}: row index exceeds dimension {n}"
                )));
            }
            for (col_key, raw_qps) in cols {
                let j = parse_index(col_key, "linear.entry column")?;
                if j > n {
                    return Err(ModelError::Validation(format!(
                        "linear.entry.{row_key}.{col_key}: column index exceeds dimension {n}"
                    )));
                }
                *linear.entry_mut(i - 1, j - 1) =
                    build_qps(raw_qps, &format!("linear.entry.{row_key}.{col_key}"))?;
            }
        }
    }

    let mut poly_terms = Vec::new();
    if let Some(raw_nl) = &raw.nonlinear {
        for t in &raw_nl.term {
            if t.component < 1 {
                return Err(ModelError::Validation(
                    "nonlinear.term.component indices are 1-based".into(),
                ));
            }
            poly_terms.push(PolyTerm {
                component: t.component - 1,
                coefficient: t.coefficient,
                exponents: t.exponents.clone(),
            });
        }
    }
    let nonlinear = PolynomialVectorField::new(n, poly_terms)?;

    let mut forcing = vec![QuasiPeriodicScalar::default(); n];
    if let Some(raw_forcing) = &raw.forcing {
        for (key, raw_qps) in raw_forcing {
            let i = parse_index(key, "forcing")?;
            if i > n {
                return Err(ModelError::Validation(format!(
                    "forcing.{key}: component index exceeds dimension {n}"
                )));
            }
            forcing[i - 1] = build_qps(raw_qps, &format!("forcing.{key}"))?;
        }
    }

    let mut spec = SystemSpec::new(linear, nonlinear, forcing, raw.t0.unwrap_or(0.0))?;
    spec.preset = None;
    Ok(spec)
}

fn write_qps(out: &mut String, section: &str, qps: &QuasiPeriodicScalar) {
    let _ = writeln!(out, "[{section}]");
    let _ = writeln!(out, "offset = {:?}", qps.offset);
    for term in &qps.terms {
        let _ = writeln!(out, "[[{section}.term]]");
        let _ = writeln!(out, "amplitude = {:?}", term.amplitude);
        let _ = writeln!(out, "frequency = {:?}", term.frequency);
        let _ = writeln!(out, "phase = {:?}", term.phase);
        let kind = match term.kind {
            TermKind::Sin => "sin",
            TermKind::Cos => "cos",
        };
        let _ = writeln!(out, "kind = \"{kind}\"");
    }
}

/// Serializes a spec back to the config schema. Round-trips through
/// [`parse_config`] to an equivalent spec.
pub fn to_config_string(spec: &SystemSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "t0 = {:?}", spec.t0);
    if let Some(p) = &spec.preset {
        let _ = writeln!(out, "\n[preset]");
        let _ = writeln!(out, "name = \"vdp\"");
        let _ = writeln!(out, "omega0 = {:?}", p.omega0);
        let _ = writeln!(out, "alpha1 = {:?}", p.alpha1);
        let _ = writeln!(out, "alpha2 = {:?}", p.alpha2);
        let _ = writeln!(out, "a1 = {:?}", p.a1);
        let _ = writeln!(out, "a2 = {:?}", p.a2);
        let _ = writeln!(out, "r1 = {:?}", p.r1);
        let _ = writeln!(out, "r2 = {:?}", p.r2);
        let _ = writeln!(out, "a = {:?}", p.a);
        let _ = writeln!(out, "omega2 = {:?}", p.omega2);
        return out;
    }

    let n = spec.dimension();
    let _ = writeln!(out, "dimension = {n}");
    for i in 0..n {
        for j in 0..n {
            let qps = spec.linear.entry(i, j);
            if qps.offset == 0.0 && qps.terms.is_empty() {
                continue;
            }
            out.push('\n');
            write_qps(&mut out, &format!("linear.entry.{}.{}", i + 1, j + 1), qps);
        }
    }
    for term in spec.nonlinear.terms() {
        let _ = writeln!(out, "\n[[nonlinear.term]]");
        let _ = writeln!(out, "component = {}", term.component + 1);
        let _ = writeln!(out, "coefficient = {:?}", term.coefficient);
        let exps: Vec<String> = term.exponents.iter().map(|e| e.to_string()).collect();
        let _ = writeln!(out, "exponents = [{}]", exps.join(", "));
    }
    for (i, qps) in spec.forcing.iter().enumerate() {
        if qps.offset == 0.0 && qps.terms.is_empty() {
            continue;
        }
        out.push('\n');
        write_qps(&mut out, &format!("forcing.{}", i + 1), qps);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_config_matches_vdp_preset() {
        let text = r#"
            [preset]
            name = "vdp"
            alpha2 = 0.1
            a1 = 0.5
            a2 = 0.5
            r1 = 3.141592653589793
            r2 = 7.0
        "#;
        let spec = parse_config(text).unwrap();
        let direct = vdp_preset(VdpParams {
            alpha2: 0.1,
            a1: 0.5,
            a2: 0.5,
            r1: std::f64::consts::PI,
            r2: 7.0,
            ..VdpParams::default()
        });
        assert_eq!(spec, direct);
    }

    #[test]
    fn explicit_linear_system() {
        let text = r#"
            dimension = 2
            [linear.entry.1.2]
            offset = 1.0
            [linear.entry.2.1]
            offset = -4.0
            [linear.entry.2.2]
            offset = -0.2
        "#;
        let spec = parse_config(text).unwrap();
        assert!(spec.nonlinear.is_empty());
        let a = spec.linear.eval(0.0);
        assert_eq!(a[(0, 1)], 1.0);
        assert_eq!(a[(1, 0)], -4.0);
    }

    #[test]
    fn degree_zero_term_is_a_validation_error() {
        let text = r#"
            dimension = 2
            [[nonlinear.term]]
            component = 1
            coefficient = 0.5
            exponents = [0, 0]
        "#;
        let err = parse_config(text).unwrap_err();
        assert!(matches!(err, ModelError::Validation(_)), "{err}");
    }

    #[test]
    fn unknown_key_named_in_error() {
        let err = parse_config("dimension = 2\nbogus_key = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
    }

    #[test]
    fn out_of_range_entry_rejected() {
        let text = "dimension = 2\n[linear.entry.3.1]\noffset = 1.0\n";
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("exceeds dimension"), "{err}");
    }

    #[test]
    fn round_trip_explicit_and_preset() {
        let explicit = r#"
            dimension = 2
            t0 = 1.5
            [linear.entry.1.2]
            offset = 1.0
            [linear.entry.2.1]
            offset = -4.0
            [[linear.entry.2.1.term]]
            amplitude = -0.5
            frequency = 3.0
            phase = 0.1
            kind = "cos"
            [[nonlinear.term]]
            component = 2
            coefficient = -0.1
            exponents = [0, 3]
            [forcing.2]
            [[forcing.2.term]]
            amplitude = 0.01
            frequency = 6.28
            kind = "sin"
        "#;
        let spec = parse_config(explicit).unwrap();
        let round = parse_config(&to_config_string(&spec)).unwrap();
        assert_eq!(spec, round);

        let preset = vdp_preset(VdpParams { a1: 0.5, r1: 1.0, ..VdpParams::default() });
        let round = parse_config(&to_config_string(&preset)).unwrap();
        assert_eq!(preset, round);
    }
}
