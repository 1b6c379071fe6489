use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::state::StoreRecord;

/// Append-only newline-delimited event log.
pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    /// Opens (or creates) the log and returns its records.
    ///
    /// A final line without a trailing newline that does not parse is a torn
    /// write; it is cut off so later appends start on a clean line.
    pub fn open(path: &Path) -> io::Result<(Self, Vec<StoreRecord>)> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(path)?;
        file.seek(SeekFrom::Start(0))?;

        let mut records = Vec::new();
        let mut reader = BufReader::new(&file);
        let mut good_len = 0u64;
        let mut line = String::new();
        let mut line_no = 0usize;
        loop {
            line.clear();
            let n = reader.read_line(&mut line)?;
            if n == 0 {
                break;
            }
            line_no += 1;
            let complete = line.ends_with('\n');
            if line.trim().is_empty() {
                if complete {
                    good_len += n as u64;
                }
                continue;
            }
            match serde_json::from_str::<StoreRecord>(line.trim_end()) {
                Ok(record) if complete => {
                    records.push(record);
                    good_len += n as u64;
                }
                Ok(record) => {
                    // Parsed but unterminated: keep it and terminate it.
                    records.push(record);
                    good_len += n as u64;
                    drop(reader);
                    file.write_all(b"\n")?;
                    good_len += 1;
                    break;
                }
                Err(err) if !complete => {
                    log::warn!("dropping torn record at {}:{line_no}: {err}", path.display());
                    break;
                }
                Err(err) => {
                    return Err(io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("{}:{line_no}: {err}", path.display()),
                    ));
                }
            }
        }
        let len = file.metadata()?.len();
        if len > good_len {
            file.set_len(good_len)?;
        }
        Ok((
            Self {
                path: path.to_path_buf(),
                file,
            },
            records,
        ))
    }

    pub fn append(&mut self, record: &StoreRecord) -> io::Result<()> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()?;
        self.file.sync_data()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
