//! Model persistence.
//!
//! Layout (all integers little-endian): magic `FXV2W1`, dim as u32, entity
//! count as u64, relation count as u64, the UTF-8 id table (length-prefixed
//! entity keys then relation names, u32 lengths), then the row-major f32
//! entity and relation matrices. Trailing bytes are a format error.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::embed::{EmbeddingModel, Norm};
use crate::entity::EntityId;
use crate::error::EmbedError;
use crate::graph::RelationKind;

const MAGIC: &[u8; 6] = b"FXV2W1";

impl EmbeddingModel {
    pub fn save(&self, path: &Path) -> Result<(), EmbedError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), EmbedError> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.entity_ids.len() as u64).to_le_bytes())?;
        w.write_all(&(self.relations.len() as u64).to_le_bytes())?;
        for id in &self.entity_ids {
            write_str(w, id.key())?;
        }
        for kind in &self.relations {
            write_str(w, kind.name())?;
        }
        for x in &self.entity_vecs {
            w.write_all(&x.to_le_bytes())?;
        }
        for x in &self.relation_vecs {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    /// Load with the default L2 scoring norm. The file format does not carry
    /// the norm; use [`EmbeddingModel::load_with_norm`] for an L1 model.
    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        Self::load_with_norm(path, Norm::L2)
    }

    pub fn load_with_norm(path: &Path, norm: Norm) -> Result<Self, EmbedError> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r, norm)
    }

    pub fn read_from<R: Read>(r: &mut R, norm: Norm) -> Result<Self, EmbedError> {
        let mut magic = [0u8; 6];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(EmbedError::VersionMismatch {
                found: String::from_utf8_lossy(&magic).into_owned(),
                expected: String::from_utf8_lossy(MAGIC).into_owned(),
            });
        }
        let dim = read_u32(r)? as usize;
        let n_entities = read_u64(r)? as usize;
        let n_relations = read_u64(r)? as usize;

        let mut entities = Vec::with_capacity(n_entities);
        for _ in 0..n_entities {
            let key = read_str(r)?;
            let id = EntityId::parse(&key)
                .map_err(|e| EmbedError::Format(format!("bad entity key in id table: {e}")))?;
            entities.push(id);
        }
        let mut relations = Vec::with_capacity(n_relations);
        for _ in 0..n_relations {
            let name = read_str(r)?;
            let kind: RelationKind = name
                .parse()
                .map_err(|_| EmbedError::Format(format!("unknown relation name {name:?}")))?;
            relations.push(kind);
        }

        let entity_vecs = read_f32s(r, n_entities * dim)?;
        let relation_vecs = read_f32s(r, n_relations * dim)?;

        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(EmbedError::Format("trailing bytes after matrices".into()));
        }

        let model = Self::from_vectors(
            dim,
            norm,
            entities
                .into_iter()
                .zip(entity_vecs.chunks(dim.max(1)))
                .map(|(id, v)| (id, v.to_vec()))
                .collect(),
            relations
                .into_iter()
                .zip(relation_vecs.chunks(dim.max(1)))
                .map(|(k, v)| (k, v.to_vec()))
                .collect(),
        )?;
        if model.entity_count() != n_entities || model.relation_count() != n_relations {
            return Err(EmbedError::Format("header counts disagree with matrix sizes".into()));
        }
        Ok(model)
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), EmbedError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            EmbedError::Format("truncated model file".into())
        } else {
            EmbedError::Io(e)
        }
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, EmbedError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, EmbedError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String, EmbedError> {
    let len = read_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(EmbedError::Format(format!("unreasonable id length {len}")));
    }
    let mut buf = vec![0u8; len];
    read_exact(r, &mut buf)?;
    String::from_utf8(buf).map_err(|_| EmbedError::Format("id table is not UTF-8".into()))
}

fn read_f32s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f32>, EmbedError> {
    let mut out = Vec::with_capacity(count);
    let mut b = [0u8; 4];
    for _ in 0..count {
        read_exact(r, &mut b)?;
        out.push(f32::from_le_bytes(b));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_model() -> EmbeddingModel {
        EmbeddingModel::from_vectors(
            3,
            Norm::L2,
            vec![
                (EntityId::cve("CVE-2020-17533").unwrap(), vec![0.25, -0.5, 0.125]),
                (EntityId::cwe(252), vec![1.0, 2.0, 3.0]),
            ],
            vec![(RelationKind::MatchingCwe, vec![-0.75, 0.5, 2.875])],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_equal() {
        let model = sample_model();
        let mut bytes = Vec::new();
        model.write_to(&mut bytes).unwrap();
        let loaded = EmbeddingModel::read_from(&mut bytes.as_slice(), Norm::L2).unwrap();
        assert_eq!(loaded.entity_vecs, model.entity_vecs);
        assert_eq!(loaded.relation_vecs, model.relation_vecs);
        assert_eq!(loaded.entity_ids, model.entity_ids);
        assert_eq!(loaded.relations, model.relations);
        assert_eq!(loaded.dim(), model.dim());
    }

    #[test]
    fn header_starts_with_magic_and_dim() {
        let model = sample_model();
        let mut bytes = Vec::new();
        model.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[..6], b"FXV2W1");
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bytes[10..18].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[18..26].try_into().unwrap()), 1);
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let model = sample_model();
        let mut bytes = Vec::new();
        model.write_to(&mut bytes).unwrap();
        bytes.truncate(bytes.len() - 3);
        let err = EmbeddingModel::read_from(&mut bytes.as_slice(), Norm::L2).unwrap_err();
        assert!(matches!(err, EmbedError::Format(_)), "got {err}");
    }

    #[test]
    fn trailing_bytes_are_a_format_error() {
        let model = sample_model();
        let mut bytes = Vec::new();
        model.write_to(&mut bytes).unwrap();
        bytes.push(0);
        let err = EmbeddingModel::read_from(&mut bytes.as_slice(), Norm::L2).unwrap_err();
        assert!(matches!(err, EmbedError::Format(_)));
    }

    #[test]
    fn header_count_disagreeing_with_the_id_table_errors() {
        let model = sample_model();
        let mut bytes = Vec::new();
        model.write_to(&mut bytes).unwrap();
        // Claim three entities; the id table and matrices hold two.
        bytes[10..18].copy_from_slice(&3u64.to_le_bytes());
        let err = EmbeddingModel::read_from(&mut bytes.as_slice(), Norm::L2).unwrap_err();
        assert!(matches!(err, EmbedError::Format(_)), "got {err}");
    }

    #[test]
    fn wrong_magic_is_a_version_mismatch() {
        let bytes = b"FXV2W9rest".to_vec();
        let err = EmbeddingModel::read_from(&mut bytes.as_slice(), Norm::L2).unwrap_err();
        assert!(matches!(err, EmbedError::VersionMismatch { .. }));
    }
}
