//! "YMF1" binary snapshots.
//!
//! Layout (little-endian): magic `YMF1`, `u32` dimension, `u32` extents,
//! `f64` spacing, `u32` group rank, `u8` kind, then every matrix entry as an
//! `(re, im)` pair of `f64`, row-major within a matrix, component index next,
//! sites last with axis 1 fastest.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;

use super::{AlgebraField, Connection, GaugeTransform, Lattice, Section, TwoForm};
use crate::lie::{AlgebraElement, Group, GroupElement, Matrix};

pub const MAGIC: &[u8; 4] = b"YMF1";

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot i/o: {0}")]
    Io(#[from] io::Error),
    #[error("malformed snapshot: {0}")]
    Format(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Connection = 0,
    Section = 1,
    TwoForm = 2,
    Gauge = 3,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Snapshot {
    Connection(Connection),
    Section(Section),
    TwoForm(TwoForm),
    Gauge(GaugeTransform),
}

impl Snapshot {
    pub fn kind(&self) -> Kind {
        match self {
            Snapshot::Connection(_) => Kind::Connection,
            Snapshot::Section(_) => Kind::Section,
            Snapshot::TwoForm(_) => Kind::TwoForm,
            Snapshot::Gauge(_) => Kind::Gauge,
        }
    }

    fn header(&self) -> (Lattice, Group) {
        match self {
            Snapshot::Connection(f) => (*f.lattice(), f.group()),
            Snapshot::Section(f) => (*f.lattice(), f.group()),
            Snapshot::TwoForm(f) => (*f.lattice(), f.group()),
            Snapshot::Gauge(g) => (*g.lattice(), g.group()),
        }
    }

    fn matrices(&self) -> Box<dyn Iterator<Item = &Matrix> + '_> {
        match self {
            Snapshot::Connection(f) => Box::new(f.values().iter().map(|v| v.matrix())),
            Snapshot::Section(f) => Box::new(f.values().iter().map(|v| v.matrix())),
            Snapshot::TwoForm(f) => Box::new(f.values().iter().map(|v| v.matrix())),
            Snapshot::Gauge(g) => Box::new(g.values().iter().map(|v| v.matrix())),
        }
    }

    pub fn into_connection(self) -> Result<Connection, SnapshotError> {
        match self {
            Snapshot::Connection(c) => Ok(c),
            other => Err(SnapshotError::Format(format!("expected a connection, found {:?}", other.kind()))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SnapshotError> {
        let mut r = bytes;
        let s = Self::read(&mut r)?;
        if !r.is_empty() {
            return Err(SnapshotError::Format(format!("{} trailing bytes", r.len())));
        }
        Ok(s)
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<(), SnapshotError> {
        let (lat, group) = self.header();
        w.write_all(MAGIC)?;
        w.write_all(&(lat.dim() as u32).to_le_bytes())?;
        for &e in lat.extents() {
            w.write_all(&(e as u32).to_le_bytes())?;
        }
        w.write_all(&lat.spacing().to_le_bytes())?;
        w.write_all(&(group.rank() as u32).to_le_bytes())?;
        w.write_all(&[self.kind() as u8])?;
        for m in self.matrices() {
            for z in m.entries() {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self, SnapshotError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(SnapshotError::Format(format!("bad magic {magic:?}")));
        }
        let dim = read_u32(r)? as usize;
        if !(2..=4).contains(&dim) {
            return Err(SnapshotError::Format(format!("dimension {dim}")));
        }
        let mut ext = Vec::with_capacity(dim);
        for _ in 0..dim {
            ext.push(read_u32(r)? as usize);
        }
        let h = read_f64(r)?;
        let lat = Lattice::new(&ext, h).map_err(|e| SnapshotError::Format(e.to_string()))?;
        let rank = read_u32(r)? as usize;
        let group = Group::from_rank(rank).ok_or_else(|| SnapshotError::Format(format!("group rank {rank}")))?;
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind)?;
        let per_site = match kind[0] {
            0 => Connection::components_for(&lat),
            1 | 3 => 1,
            2 => TwoForm::components_for(&lat),
            k => return Err(SnapshotError::Format(format!("field kind {k}"))),
        };
        let count = lat.sites() * per_site;
        let mut mats = Vec::with_capacity(count);
        let mut buf = vec![Complex64::new(0.0, 0.0); rank * rank];
        for _ in 0..count {
            for z in buf.iter_mut() {
                let re = read_f64(r)?;
                let im = read_f64(r)?;
                *z = Complex64::new(re, im);
            }
            mats.push(Matrix::from_entries(rank, &buf));
        }
        let alg = |m: Vec<Matrix>| m.into_iter().map(AlgebraElement::from_matrix_unchecked).collect::<Vec<_>>();
        Ok(match kind[0] {
            0 => Snapshot::Connection(Connection::from_values(lat, group, alg(mats))),
            1 => Snapshot::Section(Section::from_values(lat, group, alg(mats))),
            2 => Snapshot::TwoForm(TwoForm::from_values(lat, group, alg(mats))),
            _ => Snapshot::Gauge(GaugeTransform::from_values(
                lat,
                group,
                mats.into_iter().map(GroupElement::from_matrix_unchecked).collect(),
            )),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), SnapshotError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SnapshotError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, SnapshotError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, SnapshotError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
