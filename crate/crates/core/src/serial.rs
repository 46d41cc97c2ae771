//! JSON layouts for complex data: spinors as arrays of `[re, im]` pairs and
//! matrices as row-major arrays of such pairs.

use crate::algebra::{Matrix4C, RealMap, Spinor};
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn spinor_pairs(v: &Spinor) -> [[f64; 2]; 4] {
    [0, 1, 2, 3].map(|j| [v[j].re, v[j].im])
}

pub fn spinor_from_pairs(p: &[[f64; 2]; 4]) -> Spinor {
    Spinor::from_fn(|j, _| Complex64::new(p[j][0], p[j][1]))
}

pub fn matrix_rows(m: &Matrix4C) -> [[[f64; 2]; 4]; 4] {
    [0, 1, 2, 3].map(|r| [0, 1, 2, 3].map(|c| [m[(r, c)].re, m[(r, c)].im]))
}

pub fn matrix_from_rows(rows: &[[[f64; 2]; 4]; 4]) -> Matrix4C {
    Matrix4C::from_fn(|r, c| Complex64::new(rows[r][c][0], rows[r][c][1]))
}

/// `#[serde(with = "spinor")]`
pub mod spinor {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Spinor, s: S) -> Result<S::Ok, S::Error> {
        spinor_pairs(v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Spinor, D::Error> {
        Ok(spinor_from_pairs(&<[[f64; 2]; 4]>::deserialize(d)?))
    }
}

/// `#[serde(with = "spinor_vec")]`
pub mod spinor_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Spinor], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(spinor_pairs).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Spinor>, D::Error> {
        Ok(Vec::<[[f64; 2]; 4]>::deserialize(d)?
            .iter()
            .map(spinor_from_pairs)
            .collect())
    }
}

/// `#[serde(with = "spinor_array3")]`
pub mod spinor_array3 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Spinor; 3], s: S) -> Result<S::Ok, S::Error> {
        v.map(|x| spinor_pairs(&x)).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[Spinor; 3], D::Error> {
        Ok(<[[[f64; 2]; 4]; 3]>::deserialize(d)?.map(|p| spinor_from_pairs(&p)))
    }
}

/// `#[serde(with = "matrix")]`
pub mod matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Matrix4C, s: S) -> Result<S::Ok, S::Error> {
        matrix_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix4C, D::Error> {
        Ok(matrix_from_rows(&<[[[f64; 2]; 4]; 4]>::deserialize(d)?))
    }
}

/// Real 8×8 maps as row-major arrays of rows.
pub mod real_map {
    use super::*;

    pub fn serialize<S: Serializer>(m: &RealMap, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<[f64; 8]> = (0..8)
            .map(|r| std::array::from_fn(|c| m[(r, c)]))
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<RealMap, D::Error> {
        let rows = Vec::<[f64; 8]>::deserialize(d)?;
        if rows.len() != 8 {
            return Err(serde::de::Error::invalid_length(rows.len(), &"8 rows"));
        }
        Ok(RealMap::from_fn(|r, c| rows[r][c]))
    }
}
