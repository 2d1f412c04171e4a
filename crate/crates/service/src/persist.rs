//! Append-only operation log with periodic snapshots.
//!
//! Layout inside the data directory:
//!
//! * `journal.log`: one JSON entry per line, `{"seq": n, "op": ...}`. Every
//!   append is flushed with `fdatasync` before it returns.
//! * `snapshot.json`: the full state as of some `seq`, replaced atomically.
//!
//! Recovery loads the snapshot and replays journal entries with a larger
//! sequence number. A torn final line (crash mid-append) was never
//! acknowledged and is cut off; damage anywhere else is an error.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

const LOG: &str = "journal.log";
const SNAPSHOT: &str = "snapshot.json";

#[derive(Debug, thiserror::Error)]
pub enum JournalError {
    #[error("journal i/o: {0}")]
    Io(#[from] io::Error),
    #[error("journal line {line} is corrupt: {message}")]
    Corrupt { line: usize, message: String },
    #[error("snapshot is corrupt: {0}")]
    Snapshot(String),
}

#[derive(Serialize, Deserialize)]
struct Entry<O> {
    seq: u64,
    op: O,
}

#[derive(Serialize, Deserialize)]
struct SnapshotFile<S> {
    seq: u64,
    state: S,
}

/// What survived on disk.
pub struct Recovered<S, O> {
    pub snapshot: Option<S>,
    /// Operations newer than the snapshot, in order.
    pub ops: Vec<O>,
    /// Bytes cut from a torn final line.
    pub truncated_bytes: u64,
}

pub struct Journal {
    dir: PathBuf,
    log: File,
    seq: u64,
    since_snapshot: usize,
    snapshot_every: usize,
}

fn sync_dir(dir: &Path) -> io::Result<()> {
    File::open(dir)?.sync_all()
}

impl Journal {
    /// Open (creating if needed) the journal in `dir` and read back its contents.
    pub fn open<S, O>(dir: &Path, snapshot_every: usize) -> Result<(Self, Recovered<S, O>), JournalError>
    where
        S: DeserializeOwned,
        O: DeserializeOwned,
    {
        fs::create_dir_all(dir)?;
        let (snap_seq, snapshot) = match fs::read(dir.join(SNAPSHOT)) {
            Ok(bytes) => {
                let file: SnapshotFile<S> =
                    serde_json::from_slice(&bytes).map_err(|e| JournalError::Snapshot(e.to_string()))?;
                (file.seq, Some(file.state))
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => (0, None),
            Err(e) => return Err(e.into()),
        };

        let path = dir.join(LOG);
        let mut log = OpenOptions::new().create(true).read(true).append(true).open(&path)?;
        let mut reader = BufReader::new(&mut log);
        let mut ops = Vec::new();
        let mut seq = snap_seq;
        let mut good_len = 0u64;
        let mut pending: Option<(usize, String)> = None;
        let mut buf = String::new();
        let mut line_no = 0;
        loop {
            buf.clear();
            let read = reader.read_line(&mut buf)?;
            if read == 0 {
                break;
            }
            line_no += 1;
            if let Some((line, message)) = pending.take() {
                // A bad line followed by more data is not a torn tail.
                return Err(JournalError::Corrupt { line, message });
            }
            let complete = buf.ends_with('\n');
            match serde_json::from_str::<Entry<O>>(buf.trim_end()) {
                Ok(entry) if complete => {
                    good_len += read as u64;
                    if entry.seq > seq {
                        seq = entry.seq;
                        ops.push(entry.op);
                    }
                }
                Ok(_) => pending = Some((line_no, "missing line terminator".into())),
                Err(e) => pending = Some((line_no, e.to_string())),
            }
        }
        drop(reader);
        let total = log.seek(SeekFrom::End(0))?;
        let truncated_bytes = total - good_len;
        if truncated_bytes > 0 {
            log.set_len(good_len)?;
            log.sync_all()?;
        }
        let journal = Self { dir: dir.to_path_buf(), log, seq, since_snapshot: ops.len(), snapshot_every };
        Ok((journal, Recovered { snapshot, ops, truncated_bytes }))
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    /// Append one operation and flush it to stable storage.
    pub fn append<O: Serialize>(&mut self, op: &O) -> Result<u64, JournalError> {
        let seq = self.seq + 1;
        let mut line = serde_json::to_vec(&Entry { seq, op }).expect("operations serialise");
        line.push(b'\n');
        self.log.write_all(&line)?;
        self.log.sync_data()?;
        self.seq = seq;
        self.since_snapshot += 1;
        Ok(seq)
    }

    pub fn snapshot_due(&self) -> bool {
        self.snapshot_every > 0 && self.since_snapshot >= self.snapshot_every
    }

    /// Persist `state` (which must reflect every appended op) and empty the log.
    pub fn snapshot<S: Serialize>(&mut self, state: &S) -> Result<(), JournalError> {
        let tmp = self.dir.join(format!("{SNAPSHOT}.tmp"));
        {
            let mut f = File::create(&tmp)?;
            serde_json::to_writer(&mut f, &SnapshotFile { seq: self.seq, state }).map_err(io::Error::from)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, self.dir.join(SNAPSHOT))?;
        sync_dir(&self.dir)?;
        // Entries up to `seq` are now covered; a crash before this truncation
        // leaves them in place and recovery skips them by sequence number.
        self.log.set_len(0)?;
        self.log.sync_all()?;
        self.since_snapshot = 0;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type Rec = Recovered<Vec<u32>, u32>;

    fn open(dir: &Path, every: usize) -> (Journal, Rec) {
        Journal::open(dir, every).unwrap()
    }

    #[test]
    fn appended_ops_replay_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let (mut j, r) = open(dir.path(), 0);
        assert!(r.snapshot.is_none() && r.ops.is_empty());
        for v in [3, 1, 2] {
            j.append(&v).unwrap();
        }
        drop(j);
        let (j, r) = open(dir.path(), 0);
        assert_eq!(r.ops, vec![3, 1, 2]);
        assert_eq!(j.seq(), 3);
    }

    #[test]
    fn snapshot_then_tail() {
        let dir = tempfile::tempdir().unwrap();
        let (mut j, _) = open(dir.path(), 2);
        j.append(&1).unwrap();
        j.append(&2).unwrap();
        assert!(j.snapshot_due());
        j.snapshot(&vec![1u32, 2]).unwrap();
        j.append(&3).unwrap();
        drop(j);
        let (j, r) = open(dir.path(), 2);
        assert_eq!(r.snapshot, Some(vec![1, 2]));
        assert_eq!(r.ops, vec![3]);
        assert_eq!(j.seq(), 3);
    }

    #[test]
    fn stale_entries_behind_a_snapshot_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let (mut j, _) = open(dir.path(), 0);
        j.append(&1).unwrap();
        j.append(&2).unwrap();
        // Simulate a crash between the snapshot rename and the log truncation.
        fs::write(dir.path().join(SNAPSHOT), r#"{"seq":2,"state":[1,2]}"#).unwrap();
        drop(j);
        let (_, r) = open(dir.path(), 0);
        assert_eq!(r.snapshot, Some(vec![1, 2]));
        assert!(r.ops.is_empty());
    }

    #[test]
    fn torn_tail_is_cut() {
        let dir = tempfile::tempdir().unwrap();
        let (mut j, _) = open(dir.path(), 0);
        j.append(&7).unwrap();
        drop(j);
        let mut f = OpenOptions::new().append(true).open(dir.path().join(LOG)).unwrap();
        f.write_all(br#"{"seq":2,"op":"#).unwrap();
        drop(f);
        let (mut j, r) = open(dir.path(), 0);
        assert_eq!(r.ops, vec![7]);
        assert!(r.truncated_bytes > 0);
        j.append(&8).unwrap();
        drop(j);
        let (_, r) = open(dir.path(), 0);
        assert_eq!(r.ops, vec![7, 8]);
    }

    #[test]
    fn damage_before_the_tail_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(LOG), "garbage\n{\"seq\":1,\"op\":1}\n").unwrap();
        assert!(matches!(
            Journal::open::<Vec<u32>, u32>(dir.path(), 0),
            Err(JournalError::Corrupt { line: 1, .. })
        ));
    }
}
