//! On-disk sessions: one JSON snapshot per session, rewritten atomically,
//! plus an append-only JSON-lines event log beside it.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use narrascope_core::SessionSnapshot;

pub struct Store {
    dir: PathBuf,
    // seq of the last entry already appended, per session
    written: Mutex<HashMap<String, u64>>,
}

impl Store {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Store { dir, written: Mutex::new(HashMap::new()) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn snapshot_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    fn log_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.events.jsonl"))
    }

    fn logged(&self, id: &str) -> io::Result<u64> {
        if let Some(n) = self.written.lock().unwrap().get(id) {
            return Ok(*n);
        }
        let n = match fs::File::open(self.log_path(id)) {
            Ok(f) => BufReader::new(f).lines().count() as u64,
            Err(e) if e.kind() == io::ErrorKind::NotFound => 0,
            Err(e) => return Err(e),
        };
        Ok(n)
    }

    pub fn save(&self, snap: &SessionSnapshot) -> io::Result<()> {
        let id = &snap.session_id;
        let done = self.logged(id)?;
        let fresh: Vec<_> = snap.event_log.iter().filter(|e| e.seq > done).collect();
        if !fresh.is_empty() {
            let mut f = OpenOptions::new().create(true).append(true).open(self.log_path(id))?;
            for e in &fresh {
                serde_json::to_writer(&mut f, e)?;
                f.write_all(b"\n")?;
            }
            f.sync_data()?;
        }
        self.written.lock().unwrap().insert(id.clone(), snap.event_log.len() as u64);

        let tmp = self.dir.join(format!(".{id}.json.tmp"));
        {
            let mut f = fs::File::create(&tmp)?;
            serde_json::to_writer(&mut f, snap)?;
            f.sync_data()?;
        }
        fs::rename(tmp, self.snapshot_path(id))
    }

    pub fn load_all(&self) -> io::Result<Vec<SessionSnapshot>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.starts_with('.') || !name.ends_with(".json") {
                continue;
            }
            let snap: SessionSnapshot = serde_json::from_slice(&fs::read(&path)?)?;
            out.push(snap);
        }
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at));
        Ok(out)
    }

    pub fn delete(&self, id: &str) -> io::Result<()> {
        for p in [self.snapshot_path(id), self.log_path(id)] {
            match fs::remove_file(p) {
                Err(e) if e.kind() != io::ErrorKind::NotFound => return Err(e),
                _ => {}
            }
        }
        self.written.lock().unwrap().remove(id);
        Ok(())
    }
}
