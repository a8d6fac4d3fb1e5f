//! Two-dimensional comparison of the minimum-volume objective against the
//! likelihood baseline: boundary length and enclosed area per dataset.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::ad::Tensor;
use crate::boundary::{boundary_length, boundary_polyline_2d, region_area_mc, write_polyline_csv, BBox};
use crate::data::{synth, Dataset, SynthName};
use crate::error::{Error, Result};
use crate::eval::{BoundingRegion, Method};
use crate::training::{save_checkpoint, train, TrainConfig, TrainHistory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub datasets: Vec<SynthName>,
    pub methods: Vec<Method>,
    /// Rows per synthetic dataset.
    pub n: usize,
    pub data_seed: u64,
    pub train: TrainConfig,
    pub k_points: usize,
    pub area_samples: usize,
    /// Margin around data and boundaries, as a fraction of their span.
    pub bbox_margin: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            datasets: SynthName::ALL.to_vec(),
            methods: vec![Method::ConstDet, Method::LlFlow],
            n: 2000,
            data_seed: 0,
            train: TrainConfig::preset_2d(),
            k_points: 4096,
            area_samples: 200_000,
            bbox_margin: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub dataset: SynthName,
    pub method: Method,
    pub length: f64,
    pub area: f64,
    pub coverage: f64,
    pub radius: f64,
}

/// Share of the small blob of `diverse_blobs` left outside each region, and
/// share of the large blob kept inside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobCheck {
    pub method: Method,
    pub small_outside: f64,
    pub large_inside: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub diverse_blobs: Vec<BlobCheck>,
    /// Datasets where the first method's boundary is no longer than the second's.
    pub shorter_count: usize,
}

/// A trained region with everything the benchmark measured on it.
#[derive(Clone, Debug)]
pub struct BenchRun {
    pub dataset: SynthName,
    pub method: Method,
    pub region: BoundingRegion,
    pub history: TrainHistory,
    pub polyline: Vec<[f64; 2]>,
    /// Wall time of the training call alone.
    pub train_time: Duration,
}

/// Run `work` over `jobs` on at most one thread per available core. Each
/// job is single-threaded, so results match a serial run.
pub fn run_jobs<J: Sync, T: Send>(jobs: &[J], work: impl Fn(&J) -> T + Sync) -> Vec<T> {
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len()).max(1);
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(j) else { break };
                let out = work(job);
                *slots[j].lock().expect("result slot poisoned") = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot poisoned").expect("every job ran"))
        .collect()
}

/// Share of rows with the given label that the region contains.
pub fn inside_fraction(region: &BoundingRegion, data: &Dataset, label: u8) -> Result<f64> {
    let rows = data
        .rows_with_label(label)
        .ok_or_else(|| Error::Data(format!("dataset '{}' has no labels", data.name)))??;
    region.coverage(&rows)
}

fn poly_bbox(poly: &[[f64; 2]]) -> Result<Tensor> {
    Tensor::from_rows(&poly.iter().map(|p| p.to_vec()).collect::<Vec<_>>())
}

/// Train every (dataset, method) pair, measure, and optionally write
/// checkpoints, boundary CSVs and the report into `out_dir`.
pub fn run_bench2d(cfg: &BenchConfig, out_dir: Option<&Path>) -> Result<(BenchReport, Vec<BenchRun>)> {
    if cfg.datasets.is_empty() || cfg.methods.is_empty() {
        return Err(Error::Config("benchmark needs at least one dataset and one method".into()));
    }
    let data: Vec<Dataset> = cfg
        .datasets
        .iter()
        .map(|&d| synth(d, cfg.n, cfg.data_seed))
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, Method)> = (0..data.len())
        .flat_map(|i| cfg.methods.iter().map(move |&m| (i, m)))
        .collect();
    let trained = run_jobs(&jobs, |&(i, method)| {
        let tc = TrainConfig { variant: method, ..cfg.train.clone() };
        let start = Instant::now();
        train(&data[i], &tc).map(|(region, history)| (region, history, start.elapsed()))
    });

    let mut runs = Vec::with_capacity(jobs.len());
    for (&(i, method), result) in jobs.iter().zip(trained) {
        let (region, history, train_time) = result?;
        let polyline = boundary_polyline_2d(&region, cfg.k_points)?;
        runs.push(BenchRun { dataset: cfg.datasets[i], method, region, history, polyline, train_time });
    }

    let mut rows = Vec::with_capacity(runs.len());
    for (i, ds) in data.iter().enumerate() {
        let mine: Vec<&BenchRun> = runs.iter().filter(|r| r.dataset == cfg.datasets[i]).collect();
        let mut bbox = BBox::around(&ds.features, cfg.bbox_margin)?;
        for r in &mine {
            bbox = bbox.union(&BBox::around(&poly_bbox(&r.polyline)?, cfg.bbox_margin)?);
        }
        for (j, r) in mine.iter().enumerate() {
            rows.push(BenchRow {
                dataset: r.dataset,
                method: r.method,
                length: boundary_length(&r.polyline)?,
                area: region_area_mc(&r.region, &bbox, cfg.area_samples, cfg.data_seed.wrapping_add(j as u64))?,
                coverage: r.region.coverage(&ds.features)?,
                radius: r.region.radius,
            });
        }
    }

    let mut diverse_blobs = Vec::new();
    if let Some(i) = cfg.datasets.iter().position(|&d| d == SynthName::DiverseBlobs) {
        for r in runs.iter().filter(|r| r.dataset == SynthName::DiverseBlobs) {
            diverse_blobs.push(BlobCheck {
                method: r.method,
                small_outside: 1.0 - inside_fraction(&r.region, &data[i], 1)?,
                large_inside: inside_fraction(&r.region, &data[i], 0)?,
            });
        }
    }

    let shorter_count = match cfg.methods.as_slice() {
        [a, b, ..] => cfg
            .datasets
            .iter()
            .filter(|&&d| {
                let len = |m: Method| rows.iter().find(|r| r.dataset == d && r.method == m).map(|r| r.length);
                matches!((len(*a), len(*b)), (Some(x), Some(y)) if x <= y)
            })
            .count(),
        _ => 0,
    };
    let report = BenchReport { rows, diverse_blobs, shorter_count };

    if let Some(dir) = out_dir {
        write_outputs(dir, &report, &runs)?;
    }
    Ok((report, runs))
}

fn write_outputs(dir: &Path, report: &BenchReport, runs: &[BenchRun]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for r in runs {
        let stem = format!("{}_{}", r.dataset, r.method);
        write_polyline_csv(&r.polyline, BufWriter::new(File::create(dir.join(format!("{stem}_boundary.csv")))?))?;
        save_checkpoint(&r.region, dir.join(format!("{stem}.ckpt.json")))?;
    }
    let mut table = csv::Writer::from_path(dir.join("bench2d.csv")).map_err(|e| Error::Data(e.to_string()))?;
    for row in &report.rows {
        table.serialize(row).map_err(|e| Error::Data(e.to_string()))?;
    }
    table.flush()?;
    serde_json::to_writer_pretty(File::create(dir.join("bench2d.json"))?, report)?;
    Ok(())
}
