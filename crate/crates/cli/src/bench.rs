//! The bundled four-disk drive benchmark: an 8th-order plant (a double
//! integrator in series with lightly damped modes) and the 16 closed-loop
//! poles of its observer-based baseline compensator.

use mmred_core::lti::Realization;
use num_complex::Complex64;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::io::SystemFile;

pub const FOURDISK_JSON: &str = include_str!("../data/fourdisk.json");
pub const FOURDISK_POLES_JSON: &str = include_str!("../data/fourdisk_poles.json");

pub const FOURDISK_SHA256: &str = "a20b56f0d7bbe51ec2296270fedbf67f7bbfab0ecf564f964e8f1d72322085fa";
pub const FOURDISK_POLES_SHA256: &str = "122d23e46a13fc950e2851678b90a3cdca7f8c5dc5edfbf5824b8845e7a96174";

#[derive(Debug, Clone, Deserialize)]
pub struct PoleSplit {
    pub regulator: Vec<f64>,
    pub observer: Vec<f64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Fails if the bundled files were altered.
pub fn verify_checksums() -> Result<(), String> {
    for (name, text, pinned) in [
        ("fourdisk.json", FOURDISK_JSON, FOURDISK_SHA256),
        ("fourdisk_poles.json", FOURDISK_POLES_JSON, FOURDISK_POLES_SHA256),
    ] {
        let got = sha256_hex(text.as_bytes());
        if got != pinned {
            return Err(format!("bundled {name} has checksum {got}, expected {pinned}"));
        }
    }
    Ok(())
}

pub fn fourdisk_file() -> SystemFile {
    serde_json::from_str(FOURDISK_JSON).expect("bundled plant parses")
}

pub fn fourdisk_plant() -> Realization {
    fourdisk_file().to_realization().expect("bundled plant is a valid realization")
}

pub fn fourdisk_pole_split() -> PoleSplit {
    serde_json::from_str(FOURDISK_POLES_JSON).expect("bundled poles parse")
}

/// Regulator poles followed by observer poles.
pub fn fourdisk_poles() -> Vec<Complex64> {
    let split = fourdisk_pole_split();
    split.regulator.iter().chain(&split.observer).map(|&x| Complex64::new(x, 0.0)).collect()
}
