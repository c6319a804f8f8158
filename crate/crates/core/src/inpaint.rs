//! Hand-off to an external object-removal tool.
//!
//! [`render_jobs`] writes one 1-bit PNG mask per edit (white = remove) and
//! plans where the edited image should land. [`invoke_tool`] runs a command
//! template per pending job, a bounded number at a time, and accepts a
//! result only if the tool exits 0 and leaves an image of the original size.
//! Every status change is appended to a line-delimited ledger; replaying it
//! lets an interrupted run resume without redoing finished jobs.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

use crate::coco::{ImageId, ImageRecord};
use crate::error::{Error, Result};
use crate::mask::SegmentationMask;
use crate::select::EditRecord;

pub const PLACEHOLDERS: [&str; 3] = ["{image}", "{mask}", "{out}"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Pending,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalJob {
    pub edit_id: String,
    pub input_image_path: PathBuf,
    pub mask_image_path: PathBuf,
    pub output_image_path: PathBuf,
    pub width: u32,
    pub height: u32,
    pub status: JobStatus,
    pub tool_exit_code: Option<i32>,
    pub reason: Option<String>,
}

impl RemovalJob {
    fn fail(&mut self, reason: impl Into<String>) {
        self.status = JobStatus::Failed;
        self.reason = Some(reason.into());
    }
}

/// Writes `mask` as a 1-bit grayscale PNG.
pub fn write_mask_png(mask: &SegmentationMask, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), mask.width(), mask.height());
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::One);
    let row_bytes = (mask.width() as usize).div_ceil(8);
    let mut data = vec![0u8; row_bytes * mask.height() as usize];
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                data[y as usize * row_bytes + x as usize / 8] |= 0x80 >> (x % 8);
            }
        }
    }
    let to_io = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
    let mut w = enc.write_header().map_err(to_io)?;
    w.write_image_data(&data).map_err(to_io)?;
    w.finish().map_err(to_io)
}

/// Reads a mask PNG back; any nonzero pixel is foreground.
pub fn read_mask_png(path: &Path) -> Result<SegmentationMask> {
    let img = image::open(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?
        .to_luma8();
    let (w, h) = img.dimensions();
    Ok(SegmentationMask::from_bits(w, h, img.pixels().map(|p| p.0[0] > 0).collect()))
}

/// Width and height of an image file, read from its header.
pub fn image_dimensions(path: &Path) -> Result<(u32, u32)> {
    let wrap = |e: std::io::Error| Error::io(path, e);
    image::ImageReader::open(path)
        .map_err(wrap)?
        .with_guessed_format()
        .map_err(wrap)?
        .into_dimensions()
        .map_err(|e| wrap(std::io::Error::other(e)))
}

/// Writes masks to `out_root/<edit_id>.png` and plans outputs at
/// `out_root/edited/<edit_id>.<source extension>`.
///
/// Jobs whose source image is unknown or absent, or whose mask size
/// disagrees with the image record, come back failed; the rest are pending.
pub fn render_jobs(
    manifest: &[EditRecord],
    images: &[ImageRecord],
    image_root: &Path,
    out_root: &Path,
) -> Result<Vec<RemovalJob>> {
    if !image_root.is_dir() {
        return Err(Error::Config(format!("image root {} is not a directory", image_root.display())));
    }
    let edited = out_root.join("edited");
    fs::create_dir_all(&edited).map_err(|e| Error::io(&edited, e))?;
    let by_id: HashMap<ImageId, &ImageRecord> = images.iter().map(|i| (i.id, i)).collect();

    let mut jobs = Vec::with_capacity(manifest.len());
    for r in manifest {
        let mask_image_path = out_root.join(format!("{}.png", r.edit_id));
        write_mask_png(&r.removal_mask, &mask_image_path)?;
        let record = by_id.get(&r.image_id);
        let input_image_path = record.map(|i| image_root.join(&i.file_name)).unwrap_or_default();
        let ext = input_image_path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("png");
        let mut job = RemovalJob {
            edit_id: r.edit_id.clone(),
            output_image_path: edited.join(format!("{}.{ext}", r.edit_id)),
            input_image_path,
            mask_image_path,
            width: r.removal_mask.width(),
            height: r.removal_mask.height(),
            status: JobStatus::Pending,
            tool_exit_code: None,
            reason: None,
        };
        match record {
            None => job.fail(format!("image {} not in corpus", r.image_id)),
            Some(i) if (i.width, i.height) != (job.width, job.height) => job.fail(format!(
                "mask is {}x{} but image record is {}x{}",
                job.width, job.height, i.width, i.height
            )),
            Some(_) if !job.input_image_path.is_file() => {
                let msg = format!("source image {} missing", job.input_image_path.display());
                job.fail(msg)
            }
            Some(_) => {}
        }
        jobs.push(job);
    }
    Ok(jobs)
}

/// One ledger line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub edit_id: String,
    pub status: JobStatus,
    pub tool_exit_code: Option<i32>,
    pub reason: Option<String>,
}

impl From<&RemovalJob> for LedgerEntry {
    fn from(j: &RemovalJob) -> Self {
        LedgerEntry {
            edit_id: j.edit_id.clone(),
            status: j.status,
            tool_exit_code: j.tool_exit_code,
            reason: j.reason.clone(),
        }
    }
}

/// Appends entries to the ledger, flushing each line to disk.
pub fn append_ledger(path: &Path, entries: &[LedgerEntry]) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    for e in entries {
        let line = serde_json::to_string(e).expect("ledger entry serializes");
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    f.sync_data().map_err(|e| Error::io(path, e))
}

/// Latest entry per edit id. A missing ledger is empty.
pub fn replay_ledger(path: &Path) -> Result<BTreeMap<String, LedgerEntry>> {
    let mut out = BTreeMap::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(Error::io(path, e)),
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: LedgerEntry = serde_json::from_str(&line).map_err(|e| Error::Record {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.insert(entry.edit_id.clone(), entry);
    }
    Ok(out)
}

/// Splits a command template and checks that every placeholder appears.
pub fn parse_template(template: &str) -> Result<Vec<String>> {
    let argv = shell_words::split(template).map_err(|e| Error::Config(format!("bad command template: {e}")))?;
    if argv.is_empty() {
        return Err(Error::Config("empty command template".into()));
    }
    for p in PLACEHOLDERS {
        if !argv.iter().any(|a| a.contains(p)) {
            return Err(Error::Config(format!("command template lacks {p}")));
        }
    }
    Ok(argv)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvokeSummary {
    pub run: usize,
    pub done: usize,
    pub failed: usize,
    /// Already done according to the ledger.
    pub resumed: usize,
}

fn run_one(argv: &[String], job: &RemovalJob) -> RemovalJob {
    let mut job = job.clone();
    let subst = |a: &String| {
        a.replace("{image}", &job.input_image_path.to_string_lossy())
            .replace("{mask}", &job.mask_image_path.to_string_lossy())
            .replace("{out}", &job.output_image_path.to_string_lossy())
    };
    let args: Vec<String> = argv.iter().map(subst).collect();
    let output = Command::new(&args[0])
        .args(&args[1..])
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .output();
    let output = match output {
        Ok(o) => o,
        Err(e) => {
            job.fail(format!("could not start {}: {e}", args[0]));
            return job;
        }
    };
    job.tool_exit_code = output.status.code();
    if !output.status.success() {
        let stderr = String::from_utf8_lossy(&output.stderr);
        let last = stderr.lines().last().unwrap_or("").trim();
        job.fail(format!("tool exited with {:?}{}{last}", job.tool_exit_code, if last.is_empty() { "" } else { ": " }));
        return job;
    }
    match image_dimensions(&job.output_image_path) {
        Err(e) => job.fail(format!("no readable output: {e}")),
        Ok(dims) if dims != (job.width, job.height) => job.fail(format!(
            "output is {}x{}, expected {}x{}",
            dims.0, dims.1, job.width, job.height
        )),
        Ok(_) => {
            job.status = JobStatus::Done;
            job.reason = None;
        }
    }
    job
}

/// Runs `template` for every pending job with at most `parallelism` child
/// processes alive. Jobs the ledger already records as done (and whose
/// output is still present) are skipped. Each result is appended to the
/// ledger by this thread alone as it arrives.
pub fn invoke_tool(
    jobs: &mut [RemovalJob],
    template: &str,
    parallelism: usize,
    ledger: Option<&Path>,
) -> Result<InvokeSummary> {
    let argv = parse_template(template)?;
    if parallelism == 0 {
        return Err(Error::Config("parallelism must be at least 1".into()));
    }
    let mut summary = InvokeSummary::default();
    if let Some(path) = ledger {
        let previous = replay_ledger(path)?;
        for job in jobs.iter_mut().filter(|j| j.status == JobStatus::Pending) {
            if let Some(e) = previous.get(&job.edit_id) {
                if e.status == JobStatus::Done && job.output_image_path.is_file() {
                    job.status = JobStatus::Done;
                    job.tool_exit_code = e.tool_exit_code;
                    summary.resumed += 1;
                }
            }
        }
        let failed_early: Vec<LedgerEntry> = jobs
            .iter()
            .filter(|j| j.status == JobStatus::Failed && j.tool_exit_code.is_none())
            .filter(|j| previous.get(&j.edit_id) != Some(&LedgerEntry::from(*j)))
            .map(LedgerEntry::from)
            .collect();
        append_ledger(path, &failed_early)?;
    }

    let pending: Vec<usize> = (0..jobs.len()).filter(|&i| jobs[i].status == JobStatus::Pending).collect();
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, RemovalJob)>();
    let snapshot: Vec<RemovalJob> = jobs.to_vec();
    let mut ledger_error = None;
    std::thread::scope(|s| {
        for _ in 0..parallelism.min(pending.len()) {
            let tx = tx.clone();
            let (next, pending, snapshot, argv) = (&next, &pending, &snapshot, &argv);
            s.spawn(move || loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&i) = pending.get(k) else { break };
                if tx.send((i, run_one(argv, &snapshot[i]))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, job) in rx {
            if let (Some(path), None) = (ledger, &ledger_error) {
                if let Err(e) = append_ledger(path, &[LedgerEntry::from(&job)]) {
                    ledger_error = Some(e);
                }
            }
            summary.run += 1;
            match job.status {
                JobStatus::Done => summary.done += 1,
                _ => summary.failed += 1,
            }
            jobs[i] = job;
        }
    });
    match ledger_error {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}
