//! On-disk artifacts. Tables are comma-delimited with a header row, preceded
//! by one `# config=<hash> key=value ...` stamp line. Weights are raw
//! little-endian f64 blobs with a JSON manifest. Every write goes to a
//! temporary file that is then renamed into place.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::{BenchRow, BenchTable};
use crate::error::{Error, Result};
use crate::numkernel::Tensor;
use crate::rate::{LocalScoreList, ScoreEntry};
use crate::space::{decode_arch, encode_arch, BlockArch, Cost, SearchSpace};

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Stamp line metadata of a table file.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stamp {
    pub config: String,
    pub extra: BTreeMap<String, String>,
}

impl Stamp {
    pub fn new(config: &str) -> Self {
        Stamp {
            config: config.to_string(),
            extra: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.insert(key.to_string(), value.to_string());
        self
    }

    fn line(&self) -> String {
        let mut s = format!("# config={}", self.config);
        for (k, v) in &self.extra {
            s.push_str(&format!(" {k}={v}"));
        }
        s
    }

    fn parse(path: &Path, line: &str) -> Result<Stamp> {
        let body = line
            .strip_prefix("# ")
            .ok_or_else(|| Error::artifact(path, "missing stamp line"))?;
        let mut stamp = Stamp::default();
        for token in body.split_whitespace() {
            let (k, v) = token
                .split_once('=')
                .ok_or_else(|| Error::artifact(path, format!("bad stamp token {token:?}")))?;
            if k == "config" {
                stamp.config = v.to_string();
            } else {
                stamp.extra.insert(k.to_string(), v.to_string());
            }
        }
        if stamp.config.is_empty() {
            return Err(Error::artifact(path, "stamp carries no config hash"));
        }
        Ok(stamp)
    }

    fn get<T: std::str::FromStr>(&self, path: &Path, key: &str) -> Result<T> {
        self.extra
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::artifact(path, format!("stamp lacks {key}")))
    }
}

fn check_hash(path: &Path, found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(Error::HashMismatch {
            path: path.to_path_buf(),
            found: found.to_string(),
            expected: expected.to_string(),
        });
    }
    Ok(())
}

/// A stamped comma-delimited table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub stamp: Stamp,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(stamp: Stamp, header: &[&str]) -> Self {
        Table {
            stamp,
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.stamp.line().into_bytes();
        out.push(b'\n');
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory write")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Table> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let (first, rest) = text.split_once('\n').unwrap_or((text.as_str(), ""));
        let stamp = Stamp::parse(path, first)?;
        let mut r = csv::Reader::from_reader(rest.as_bytes());
        let header = r
            .headers()
            .map_err(|e| Error::artifact(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::artifact(path, e))?;
        Ok(Table {
            stamp,
            header,
            rows,
        })
    }

    /// Reads a table and refuses it unless its stamp carries `expected`.
    pub fn read_checked(path: &Path, expected: &str) -> Result<Table> {
        let t = Table::read(path)?;
        check_hash(path, &t.stamp.config, expected)?;
        Ok(t)
    }

    fn expect_header(&self, path: &Path, header: &[&str]) -> Result<()> {
        if self.header != header {
            return Err(Error::artifact(
                path,
                format!("expected header {}", header.join(",")),
            ));
        }
        Ok(())
    }
}

fn field<T: std::str::FromStr>(path: &Path, row: &[String], i: usize, name: &str) -> Result<T> {
    row.get(i)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::artifact(path, format!("bad {name} field in row {row:?}")))
}

/// Shortest text that parses back to the same f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

const SCORE_HEADER: [&str; 5] = ["block", "arch_id", "score", "params", "macs"];

pub fn score_table(lists: &[LocalScoreList], config: &str) -> Table {
    let first = lists.first();
    let stamp = Stamp::new(config)
        .with("val_rows", first.map_or(0, |l| l.val_rows))
        .with("seed", first.map_or(0, |l| l.seed));
    let mut t = Table::new(stamp, &SCORE_HEADER);
    for l in lists {
        for e in &l.entries {
            t.push(vec![
                l.block.to_string(),
                e.arch.to_string(),
                fmt_f64(e.score),
                e.cost.params.to_string(),
                e.cost.macs.to_string(),
            ]);
        }
    }
    t
}

pub fn write_score_lists(path: &Path, lists: &[LocalScoreList], config: &str) -> Result<()> {
    score_table(lists, config).write(path)
}

pub fn read_score_lists(
    path: &Path,
    space: &SearchSpace,
    config: &str,
) -> Result<Vec<LocalScoreList>> {
    let t = Table::read_checked(path, config)?;
    t.expect_header(path, &SCORE_HEADER)?;
    let val_rows = t.stamp.get(path, "val_rows")?;
    let seed = t.stamp.get(path, "seed")?;
    let mut per_block: Vec<Vec<ScoreEntry>> = vec![Vec::new(); space.blocks.len()];
    for row in &t.rows {
        let k: usize = field(path, row, 0, "block")?;
        let spec = space.block(k)?;
        let arch = BlockArch::parse(&row[1], spec, 0).map_err(|e| Error::artifact(path, e))?;
        per_block[k].push(ScoreEntry {
            arch,
            score: field(path, row, 2, "score")?,
            cost: Cost {
                params: field(path, row, 3, "params")?,
                macs: field(path, row, 4, "macs")?,
            },
        });
    }
    per_block
        .into_iter()
        .enumerate()
        .map(|(k, entries)| {
            let expected = space.blocks[k].size_u64() as usize;
            if entries.len() != expected {
                return Err(Error::artifact(
                    path,
                    format!("block {k} has {} rows, expected {expected}", entries.len()),
                ));
            }
            Ok(LocalScoreList::from_unsorted(k, entries, val_rows, seed))
        })
        .collect()
}

const BENCH_HEADER: [&str; 5] = ["arch_id", "score", "params", "macs", "seed"];

pub fn bench_table(rows: &[BenchRow], config: &str, task_seed: u64) -> Table {
    let mut t = Table::new(
        Stamp::new(config).with("task_seed", task_seed),
        &BENCH_HEADER,
    );
    for r in rows {
        t.push(vec![
            encode_arch(&r.arch),
            fmt_f64(r.score),
            r.cost.params.to_string(),
            r.cost.macs.to_string(),
            r.seed.to_string(),
        ]);
    }
    t
}

pub fn write_bench(path: &Path, bench: &BenchTable) -> Result<()> {
    bench_table(&bench.rows, &bench.config_hash, bench.task_seed).write(path)
}

/// Reads a complete or partial bench file.
pub fn read_bench(path: &Path, space: &SearchSpace, config: &str) -> Result<BenchTable> {
    let t = Table::read_checked(path, config)?;
    t.expect_header(path, &BENCH_HEADER)?;
    let rows = t
        .rows
        .iter()
        .map(|row| {
            Ok(BenchRow {
                arch: decode_arch(row.first().map_or("", String::as_str), space)
                    .map_err(|e| Error::artifact(path, e))?,
                score: field(path, row, 1, "score")?,
                cost: Cost {
                    params: field(path, row, 2, "params")?,
                    macs: field(path, row, 3, "macs")?,
                },
                seed: field(path, row, 4, "seed")?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(BenchTable {
        rows,
        config_hash: config.to_string(),
        task_seed: t.stamp.get(path, "task_seed")?,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub shape: Vec<usize>,
    /// Offset into the blob, in f64 elements.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightManifest {
    pub config: String,
    pub blob: String,
    pub sha256: String,
    pub tensors: Vec<TensorEntry>,
}

/// Writes `<dir>/<name>.bin` and `<dir>/<name>.json`.
pub fn save_weights(dir: &Path, name: &str, tensors: &[&Tensor], config: &str) -> Result<()> {
    let mut blob = Vec::new();
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0;
    for t in tensors {
        entries.push(TensorEntry {
            shape: t.shape().to_vec(),
            offset,
        });
        offset += t.len();
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = WeightManifest {
        config: config.to_string(),
        blob: format!("{name}.bin"),
        sha256: hex::encode(Sha256::digest(&blob)),
        tensors: entries,
    };
    write_atomic(&dir.join(&manifest.blob), &blob)?;
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_atomic(&dir.join(format!("{name}.json")), &json)
}

/// Overwrites `targets` in order with the saved tensors after checking the
/// config hash, the blob digest and every shape.
pub fn load_weights(
    dir: &Path,
    name: &str,
    targets: &mut [&mut Tensor],
    config: &str,
) -> Result<()> {
    let mpath = dir.join(format!("{name}.json"));
    let text = fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: WeightManifest =
        serde_json::from_slice(&text).map_err(|e| Error::artifact(&mpath, e))?;
    check_hash(&mpath, &manifest.config, config)?;
    let bpath = dir.join(&manifest.blob);
    let blob = fs::read(&bpath).map_err(|e| Error::io(&bpath, e))?;
    if hex::encode(Sha256::digest(&blob)) != manifest.sha256 {
        return Err(Error::artifact(
            &bpath,
            "blob digest does not match manifest",
        ));
    }
    if manifest.tensors.len() != targets.len() {
        return Err(Error::artifact(
            &mpath,
            format!(
                "{} tensors saved, {} expected",
                manifest.tensors.len(),
                targets.len()
            ),
        ));
    }
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    for (i, (entry, target)) in manifest.tensors.iter().zip(targets.iter_mut()).enumerate() {
        if entry.shape != target.shape() {
            return Err(Error::artifact(
                &mpath,
                format!(
                    "tensor {i} has shape {:?}, expected {:?}",
                    entry.shape,
                    target.shape()
                ),
            ));
        }
        let n = target.len();
        let src = values
            .get(entry.offset..entry.offset + n)
            .ok_or_else(|| Error::artifact(&bpath, "blob too short"))?;
        target.data_mut().copy_from_slice(src);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::run_dna;
    use crate::testkit::fixture;

    #[test]
    fn score_lists_round_trip_bit_exact() {
        let f = fixture();
        let dna = run_dna(&f.space, &f.data, &f.teacher.net, &f.cfg.dna_settings(1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        write_score_lists(&path, &dna.lists, "abc").unwrap();
        let bytes = fs::read(&path).unwrap();
        let back = read_score_lists(&path, &f.space, "abc").unwrap();
        assert_eq!(back, dna.lists);
        write_score_lists(&path, &back, "abc").unwrap();
        assert_eq!(fs::read(&path).unwrap(), bytes);
        assert!(String::from_utf8(bytes)
            .unwrap()
            .starts_with("# config=abc "));
        assert!(matches!(
            read_score_lists(&path, &f.space, "xyz"),
            Err(Error::HashMismatch { .. })
        ));
    }

    #[test]
    fn truncated_score_file_is_rejected() {
        let f = fixture();
        let dna = run_dna(&f.space, &f.data, &f.teacher.net, &f.cfg.dna_settings(1)).unwrap();
        let mut t = score_table(&dna.lists, "abc");
        t.rows.pop();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        t.write(&path).unwrap();
        assert!(matches!(
            read_score_lists(&path, &f.space, "abc"),
            Err(Error::Artifact { .. })
        ));
    }

    #[test]
    fn floats_print_exactly() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 12_345.678_9, -0.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn weights_round_trip_and_detect_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = crate::rng::rng_for(1, &[]);
        let a = Tensor::randn(&[3, 4], 1.0, &mut rng);
        let b = Tensor::randn(&[5], 1.0, &mut rng);
        save_weights(dir.path(), "w", &[&a, &b], "h1").unwrap();
        let (mut a2, mut b2) = (Tensor::zeros(&[3, 4]), Tensor::zeros(&[5]));
        load_weights(dir.path(), "w", &mut [&mut a2, &mut b2], "h1").unwrap();
        assert_eq!((a2, b2), (a.clone(), b.clone()));
        let blob = fs::read(dir.path().join("w.bin")).unwrap();
        assert_eq!(blob.len(), 17 * 8);
        assert_eq!(&blob[..8], &a.data()[0].to_le_bytes());

        let mut wrong = Tensor::zeros(&[4, 3]);
        let mut b3 = Tensor::zeros(&[5]);
        assert!(load_weights(dir.path(), "w", &mut [&mut wrong, &mut b3], "h1").is_err());
        let (mut a4, mut b4) = (Tensor::zeros(&[3, 4]), Tensor::zeros(&[5]));
        assert!(matches!(
            load_weights(dir.path(), "w", &mut [&mut a4, &mut b4], "h2"),
            Err(Error::HashMismatch { .. })
        ));
        let mut bad = blob.clone();
        bad[3] ^= 1;
        fs::write(dir.path().join("w.bin"), bad).unwrap();
        assert!(matches!(
            load_weights(dir.path(), "w", &mut [&mut a4, &mut b4], "h1"),
            Err(Error::Artifact { .. })
        ));
    }

    #[test]
    fn atomic_write_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("x.csv");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn stamps_keep_extra_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut t = Table::new(Stamp::new("h").with("k", 3).with("a", "x"), &["c1", "c2"]);
        t.push(vec!["1".into(), "a,b".into()]);
        t.write(&path).unwrap();
        let back = Table::read_checked(&path, "h").unwrap();
        assert_eq!(back, t);
        fs::write(&path, "c1,c2\n1,2\n").unwrap();
        assert!(matches!(Table::read(&path), Err(Error::Artifact { .. })));
    }
}
