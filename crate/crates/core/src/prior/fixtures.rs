//! Parity fixtures: `(input, t, expected)` triples exported alongside a
//! weight file so an independent evaluator can be checked against them.
//!
//! A fixture file is a JSON array of objects
//! `{"shape": [n_r, n_t], "input": <b64>, "t": <f64>, "expected": <b64>}`,
//! where each tensor is base64 over little-endian `f64` pairs `(re, im)` in
//! row-major order.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::prior::VelocityField;

#[derive(Clone, Debug, PartialEq)]
pub struct ParityFixture {
    pub input: ComplexMatrix,
    pub t: f64,
    pub expected: ComplexMatrix,
}

#[derive(Serialize, Deserialize)]
struct RawFixture {
    shape: [usize; 2],
    input: String,
    t: f64,
    expected: String,
}

fn encode_matrix(m: &ComplexMatrix) -> String {
    let mut bytes = Vec::with_capacity(16 * m.as_slice().len());
    for z in m.as_slice() {
        bytes.extend_from_slice(&z.re.to_le_bytes());
        bytes.extend_from_slice(&z.im.to_le_bytes());
    }
    STANDARD.encode(bytes)
}

fn decode_matrix(text: &str, [rows, cols]: [usize; 2], what: &str) -> Result<ComplexMatrix> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Header(format!("fixture {what}: {e}")))?;
    if bytes.len() != 16 * rows * cols {
        return Err(Error::Truncated(format!(
            "fixture {what}: {} bytes for a {rows}x{cols} complex tensor",
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            Complex64::new(re, im)
        })
        .collect();
    ComplexMatrix::new(rows, cols, data)
}

pub fn encode_fixtures(fixtures: &[ParityFixture]) -> Result<String> {
    let raw: Vec<RawFixture> = fixtures
        .iter()
        .map(|f| {
            if f.input.shape() != f.expected.shape() {
                return Err(Error::Shape("fixture input and expected output differ in shape".into()));
            }
            Ok(RawFixture {
                shape: [f.input.rows(), f.input.cols()],
                input: encode_matrix(&f.input),
                t: f.t,
                expected: encode_matrix(&f.expected),
            })
        })
        .collect::<Result<_>>()?;
    serde_json::to_string_pretty(&raw).map_err(|e| Error::Header(e.to_string()))
}

pub fn decode_fixtures(text: &str) -> Result<Vec<ParityFixture>> {
    let raw: Vec<RawFixture> = serde_json::from_str(text).map_err(|e| Error::Header(e.to_string()))?;
    raw.into_iter()
        .enumerate()
        .map(|(k, r)| {
            Ok(ParityFixture {
                input: decode_matrix(&r.input, r.shape, &format!("{k} input"))?,
                t: r.t,
                expected: decode_matrix(&r.expected, r.shape, &format!("{k} expected"))?,
            })
        })
        .collect()
}

pub fn load_fixtures(path: impl AsRef<Path>) -> Result<Vec<ParityFixture>> {
    decode_fixtures(&fs::read_to_string(path)?)
}

/// Largest absolute deviation of `field` from the fixtures' expected outputs,
/// over real and imaginary parts separately.
pub fn parity_max_abs_error<F: VelocityField + ?Sized>(field: &F, fixtures: &[ParityFixture]) -> Result<f64> {
    let mut worst = 0.0f64;
    for f in fixtures {
        let got = field.eval(&f.input, f.t)?;
        for (a, b) in got.as_slice().iter().zip(f.expected.as_slice()) {
            worst = worst.max((a.re - b.re).abs()).max((a.im - b.im).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::GaussianAnalyticField;
    use crate::rng::Rng;

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut rng = Rng::new(4);
        let fixtures: Vec<ParityFixture> = (0..3)
            .map(|k| ParityFixture {
                input: rng.complex_gaussian(2, 3, 1.0).unwrap(),
                t: k as f64 / 3.0,
                expected: rng.complex_gaussian(2, 3, 1.0).unwrap(),
            })
            .collect();
        let text = encode_fixtures(&fixtures).unwrap();
        assert_eq!(decode_fixtures(&text).unwrap(), fixtures);
    }

    #[test]
    fn wrong_length_rejected() {
        let text = r#"[{"shape": [2, 2], "input": "AAAA", "t": 0.5, "expected": "AAAA"}]"#;
        assert!(matches!(decode_fixtures(text), Err(Error::Truncated(_))));
    }

    #[test]
    fn self_generated_fixtures_have_zero_error() {
        let field = GaussianAnalyticField::zero_mean(2, ComplexMatrix::identity(3)).unwrap();
        let mut rng = Rng::new(9);
        let fixtures: Vec<ParityFixture> = (0..5)
            .map(|k| {
                let input = rng.complex_gaussian(2, 3, 1.0).unwrap();
                let t = 0.2 * k as f64;
                let expected = field.eval(&input, t).unwrap();
                ParityFixture { input, t, expected }
            })
            .collect();
        assert_eq!(parity_max_abs_error(&field, &fixtures).unwrap(), 0.0);
        let mut off = fixtures.clone();
        off[2].expected = off[2].expected.map(|z| z + Complex64::new(0.0, 1e-3));
        let err = parity_max_abs_error(&field, &off).unwrap();
        assert!((err - 1e-3).abs() < 1e-12);
    }
}
