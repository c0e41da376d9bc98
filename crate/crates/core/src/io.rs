//! JSON exchange formats.
//!
//! Matrices: `{"dim": d, "entries": [[re, im], ...]}` in row-major order.
//! Pure states: `{"dim": d, "amplitudes": [[re, im], ...]}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{QotError, Result};
use crate::linalg::{BipartiteOperator, ComplexSquareMatrix, DensityMatrix, PureState, Tolerances, C64};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub dim: usize,
    pub entries: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PureStateJson {
    pub dim: usize,
    pub amplitudes: Vec<[f64; 2]>,
}

impl From<&ComplexSquareMatrix> for MatrixJson {
    fn from(m: &ComplexSquareMatrix) -> Self {
        Self {
            dim: m.dim(),
            entries: m.row_major_entries().iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

impl TryFrom<MatrixJson> for ComplexSquareMatrix {
    type Error = QotError;

    fn try_from(j: MatrixJson) -> Result<Self> {
        let entries = j.entries.iter().map(|[re, im]| C64::new(*re, *im)).collect();
        ComplexSquareMatrix::from_row_major(j.dim, entries)
    }
}

impl Serialize for ComplexSquareMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexSquareMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = MatrixJson::deserialize(d)?;
        ComplexSquareMatrix::try_from(j).map_err(serde::de::Error::custom)
    }
}

impl Serialize for BipartiteOperator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.matrix().serialize(s)
    }
}

impl Serialize for DensityMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.matrix().serialize(s)
    }
}

impl From<&PureState> for PureStateJson {
    fn from(p: &PureState) -> Self {
        Self {
            dim: p.dim(),
            amplitudes: p.amplitudes().iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

impl TryFrom<PureStateJson> for PureState {
    type Error = QotError;

    fn try_from(j: PureStateJson) -> Result<Self> {
        if j.amplitudes.len() != j.dim {
            return Err(QotError::EntryCount {
                expected: j.dim,
                actual: j.amplitudes.len(),
            });
        }
        PureState::new(j.amplitudes.iter().map(|[re, im]| C64::new(*re, *im)).collect())
    }
}

impl Serialize for PureState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PureStateJson::from(self).serialize(s)
    }
}

pub fn parse_matrix(text: &str) -> Result<ComplexSquareMatrix> {
    let j: MatrixJson = serde_json::from_str(text)?;
    ComplexSquareMatrix::try_from(j)
}

pub fn parse_density(text: &str, tol: Tolerances) -> Result<DensityMatrix> {
    DensityMatrix::with_tolerances(parse_matrix(text)?, tol)
}

pub fn parse_pure_state(text: &str) -> Result<PureState> {
    let j: PureStateJson = serde_json::from_str(text)?;
    PureState::try_from(j)
}

pub fn read_density(path: &Path, tol: Tolerances) -> Result<DensityMatrix> {
    parse_density(&std::fs::read_to_string(path)?, tol)
}

pub fn read_pure_state(path: &Path) -> Result<PureState> {
    parse_pure_state(&std::fs::read_to_string(path)?)
}

pub fn matrix_to_json(m: &ComplexSquareMatrix) -> String {
    serde_json::to_string(&MatrixJson::from(m)).expect("matrix serializes")
}
