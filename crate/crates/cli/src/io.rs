//! JSON formats for systems and generators, and the small text grammars used
//! on the command line (references, points, pole lists).

use std::fs;
use std::path::Path;

use mmred_core::linalg::{CMat, CVec, RMat};
use mmred_core::lti::Realization;
use mmred_core::siggen::SignalGenerator;
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// `{"name", "A", "B", "C", "D"}` with row-major nested arrays. An order-0
/// system (static gain) has `A = []`, `B = []`, `C = [[]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemFile {
    pub name: String,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
}

fn rows_to_matrix(what: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<RMat, String> {
    if rows.len() != nrows {
        return Err(format!("{what} has {} rows, expected {nrows}", rows.len()));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(format!("{what} row {i} has {} entries, expected {ncols}", r.len()));
        }
    }
    Ok(RMat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &RMat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl SystemFile {
    pub fn from_realization(name: &str, sys: &Realization) -> Self {
        let c = if sys.order() == 0 { vec![vec![]] } else { matrix_to_rows(&sys.c) };
        Self { name: name.to_string(), a: matrix_to_rows(&sys.a), b: matrix_to_rows(&sys.b), c, d: vec![vec![sys.d]] }
    }

    pub fn to_realization(&self) -> Result<Realization, String> {
        let n = self.a.len();
        let a = rows_to_matrix("A", &self.a, n, n)?;
        let b = rows_to_matrix("B", &self.b, n, 1)?;
        let c = rows_to_matrix("C", &self.c, 1, n)?;
        let d = rows_to_matrix("D", &self.d, 1, 1)?;
        if a.iter().chain(b.iter()).chain(c.iter()).chain(d.iter()).any(|x| !x.is_finite()) {
            return Err("matrices must be finite".into());
        }
        Realization::new(a, b, c, d[(0, 0)]).map_err(|e| e.to_string())
    }
}

/// Generator data `(S, L, ω(0))`, with optional imaginary parts for
/// complex interpolation points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorFile {
    #[serde(rename = "S")]
    pub s: Vec<Vec<f64>>,
    #[serde(rename = "L")]
    pub l: Vec<Vec<f64>>,
    pub omega0: Vec<f64>,
    #[serde(rename = "S_imag", default, skip_serializing_if = "Option::is_none")]
    pub s_imag: Option<Vec<Vec<f64>>>,
    #[serde(rename = "L_imag", default, skip_serializing_if = "Option::is_none")]
    pub l_imag: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega0_imag: Option<Vec<f64>>,
}

fn split_complex(m: &CMat) -> (Vec<Vec<f64>>, Option<Vec<Vec<f64>>>) {
    let re = matrix_to_rows(&m.map(|z| z.re));
    let im = m.map(|z| z.im);
    (re, if im.iter().any(|x| *x != 0.0) { Some(matrix_to_rows(&im)) } else { None })
}

impl GeneratorFile {
    pub fn from_generator(g: &SignalGenerator) -> Self {
        let (s, s_imag) = split_complex(g.s());
        let (l, l_imag) = split_complex(g.l());
        let w = g.omega0();
        let omega0_imag = if w.iter().any(|z| z.im != 0.0) { Some(w.iter().map(|z| z.im).collect()) } else { None };
        Self { s, l, omega0: w.iter().map(|z| z.re).collect(), s_imag, l_imag, omega0_imag }
    }

    pub fn to_generator(&self) -> Result<SignalGenerator, String> {
        let nu = self.s.len();
        let join = |what: &str, re: &[Vec<f64>], im: &Option<Vec<Vec<f64>>>, r: usize, c: usize| -> Result<CMat, String> {
            let re = rows_to_matrix(what, re, r, c)?;
            let im = match im {
                Some(im) => rows_to_matrix(what, im, r, c)?,
                None => RMat::zeros(r, c),
            };
            Ok(CMat::from_fn(r, c, |i, j| Complex64::new(re[(i, j)], im[(i, j)])))
        };
        let s = join("S", &self.s, &self.s_imag, nu, nu)?;
        let l = join("L", &self.l, &self.l_imag, 1, nu)?;
        if self.omega0.len() != nu || self.omega0_imag.as_ref().is_some_and(|v| v.len() != nu) {
            return Err(format!("omega0 must have {nu} entries"));
        }
        let w = CVec::from_fn(nu, |i, _| {
            Complex64::new(self.omega0[i], self.omega0_imag.as_ref().map_or(0.0, |v| v[i]))
        });
        SignalGenerator::new(s, l, w).map_err(|e| e.to_string())
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Parses a JSON document, reporting syntax and schema errors with line and
/// column.
pub fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> CliResult<T> {
    serde_json::from_str(text).map_err(|e| {
        // serde_json appends " at line L column C"; the position is reported separately.
        let full = e.to_string();
        let message = full.rsplit_once(" at line ").map_or(full.as_str(), |(m, _)| m).to_string();
        CliError::Parse { path: path.to_path_buf(), line: e.line(), column: e.column(), message }
    })
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    parse_json(path, &read_text(path)?)
}

pub fn load_system(path: &Path) -> CliResult<(String, Realization)> {
    let file: SystemFile = load_json(path)?;
    let sys = file.to_realization().map_err(|message| CliError::Format { path: path.to_path_buf(), message })?;
    Ok((file.name, sys))
}

pub fn load_generator(path: &Path) -> CliResult<SignalGenerator> {
    let file: GeneratorFile = load_json(path)?;
    file.to_generator().map_err(|message| CliError::Format { path: path.to_path_buf(), message })
}

/// Pretty JSON with a trailing newline. Floats are printed in shortest
/// round-trip form, so output is byte-stable for identical values.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_file(path, &to_json(value))
}

pub fn save_system(path: &Path, name: &str, sys: &Realization) -> CliResult<()> {
    write_json(path, &SystemFile::from_realization(name, sys))
}

/// Reference signal named on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceSpec {
    Step,
    Ramp,
    Poly { degree: usize },
    Sin { frequency: f64 },
}

impl ReferenceSpec {
    /// Accepts `step`, `ramp`, `poly K` / `poly:K` and `sin W` / `sin:W`.
    pub fn parse(words: &[String]) -> Result<Self, String> {
        let joined = words.join(" ");
        let mut parts = joined.split([' ', ':']).filter(|p| !p.is_empty());
        let head = parts.next().unwrap_or("");
        let arg = parts.next();
        if parts.next().is_some() {
            return Err(format!("unexpected reference '{joined}'"));
        }
        match (head, arg) {
            ("step", None) => Ok(Self::Step),
            ("ramp", None) => Ok(Self::Ramp),
            ("poly", Some(k)) => k.parse().map(|degree| Self::Poly { degree }).map_err(|_| format!("bad polynomial degree '{k}'")),
            ("sin", Some(w)) => match w.parse::<f64>() {
                Ok(frequency) if frequency > 0.0 && frequency.is_finite() => Ok(Self::Sin { frequency }),
                _ => Err(format!("bad sinusoid frequency '{w}'")),
            },
            _ => Err(format!("unknown reference '{joined}' (expected step, ramp, poly K or sin W)")),
        }
    }

    pub fn generator(&self) -> Result<SignalGenerator, mmred_core::Error> {
        match self {
            Self::Step => Ok(SignalGenerator::polynomial(0)),
            Self::Ramp => Ok(SignalGenerator::polynomial(1)),
            Self::Poly { degree } => Ok(SignalGenerator::polynomial(*degree)),
            Self::Sin { frequency } => SignalGenerator::sinusoid(*frequency),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Step => "step".into(),
            Self::Ramp => "ramp".into(),
            Self::Poly { degree } => format!("poly {degree}"),
            Self::Sin { frequency } => format!("sin {frequency}"),
        }
    }
}

/// A complex number written as `re`, `re+imj`, `re-imj`, `imj` or `re,im`.
pub fn parse_point(text: &str) -> Result<Complex64, String> {
    let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || format!("cannot parse '{text}' as a complex number");
    if let Some((re, im)) = t.split_once(',') {
        return Ok(Complex64::new(re.parse().map_err(|_| bad())?, im.parse().map_err(|_| bad())?));
    }
    let Some(body) = t.strip_suffix(['j', 'i']) else {
        return t.parse().map(|re| Complex64::new(re, 0.0)).map_err(|_| bad());
    };
    // Split at the last sign that is not part of an exponent.
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(i) => (&body[..i], &body[i..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => "1",
        "-" => "-1",
        other => other,
    };
    Ok(Complex64::new(re.parse().map_err(|_| bad())?, im.parse().map_err(|_| bad())?))
}

/// Comma- or space-separated list of complex points; `re,im` pairs are not
/// allowed here, use `re+imj` instead.
pub fn parse_point_list(text: &str) -> Result<Vec<Complex64>, String> {
    text.split([',', ' ', ';']).filter(|p| !p.is_empty()).map(parse_point).collect()
}

/// Pole list as `[[re, im], …]`.
pub fn points_to_pairs(points: &[Complex64]) -> Vec<[f64; 2]> {
    points.iter().map(|z| [z.re, z.im]).collect()
}
