//! Dataset ingestion and synthesis: trajectory and traffic-flow CSVs, the
//! synthetic generators that stand in for licensed datasets, sliding-window
//! preparation, and z-score normalization.
//!
//! Loaders are strict: malformed input is an error with enough context to
//! find the offending row, never a silent repair.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics::GeoPosition;
use crate::scalar::{mean_std, Scalar};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: missing column {column}")]
    MissingColumn { path: String, column: String },
    #[error("{path} line {line}: {message}")]
    MalformedRow {
        path: String,
        line: u64,
        message: String,
    },
    #[error("vehicle {vehicle_id}: slot indices not contiguous from 0 (expected {expected}, found {found})")]
    NonContiguousSlots {
        vehicle_id: u32,
        expected: u32,
        found: u32,
    },
    #[error("duplicate record for vehicle {vehicle_id} slot {slot}")]
    DuplicateTrajectoryRow { vehicle_id: u32, slot: u32 },
    #[error("server {server_id}: flow series has a gap at slot {slot}")]
    FlowGap { server_id: u32, slot: u32 },
    #[error("duplicate flow record for server {server_id} slot {slot}")]
    DuplicateFlowRow { server_id: u32, slot: u32 },
    #[error("negative flow count {value} for server {server_id} slot {slot}")]
    NegativeFlow {
        server_id: u32,
        slot: u32,
        value: i64,
    },
    #[error("series of length {len} too short for window {window}")]
    SeriesTooShort { len: usize, window: usize },
    #[error("synthetic period must be >= 2, got {0}")]
    PeriodTooShort(usize),
    #[error(transparent)]
    Physics(#[from] crate::physics::PhysicsError),
}

/// One row of the canonical trajectory CSV `vehicle_id,slot_index,lat,lon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub vehicle_id: u32,
    pub slot_index: u32,
    pub lat: f64,
    pub lon: f64,
}

/// A vehicle's chronologically ordered positions, slot 0 first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub vehicle_id: u32,
    pub positions: Vec<GeoPosition<T>>,
}

/// A server's dense per-slot flow counts, slot 0 first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSeries {
    pub server_id: u32,
    pub counts: Vec<u32>,
}

/// Supervised window: `inputs` are consecutive flow values, `target` is the
/// value immediately after them.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowWindow<T> {
    pub server_id: u32,
    pub inputs: Vec<T>,
    pub target: T,
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>, DataError> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => DataError::Io {
                path: path.display().to_string(),
                source,
            },
            other => DataError::MalformedRow {
                path: path.display().to_string(),
                line: 0,
                message: format!("{other:?}"),
            },
        })
}

fn header_index(
    headers: &csv::StringRecord,
    name: &str,
    path: &Path,
) -> Result<usize, DataError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| DataError::MissingColumn {
            path: path.display().to_string(),
            column: name.to_string(),
        })
}

fn parse_field<V: std::str::FromStr>(
    record: &csv::StringRecord,
    idx: usize,
    name: &str,
    path: &Path,
    line: u64,
) -> Result<V, DataError> {
    let raw = record.get(idx).ok_or_else(|| DataError::MalformedRow {
        path: path.display().to_string(),
        line,
        message: format!("missing field `{name}`"),
    })?;
    raw.trim().parse().map_err(|_| DataError::MalformedRow {
        path: path.display().to_string(),
        line,
        message: format!("cannot parse `{raw}` as {name}"),
    })
}

/// Load `vehicle_id,slot_index,lat,lon` into per-vehicle trajectories,
/// sorted by vehicle then slot. Slots must be contiguous from 0.
pub fn load_trajectories<T: Scalar>(path: &Path) -> Result<Vec<Trajectory<T>>, DataError> {
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| DataError::MalformedRow {
            path: path.display().to_string(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let vi = header_index(&headers, "vehicle_id", path)?;
    let si = header_index(&headers, "slot_index", path)?;
    let la = header_index(&headers, "lat", path)?;
    let lo = header_index(&headers, "lon", path)?;

    let mut rows: Vec<TrajectoryRecord> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2; // header occupies line 1
        let record = record.map_err(|e| DataError::MalformedRow {
            path: path.display().to_string(),
            line,
            message: e.to_string(),
        })?;
        let lat: f64 = parse_field(&record, la, "lat", path, line)?;
        let lon: f64 = parse_field(&record, lo, "lon", path, line)?;
        GeoPosition::<f64>::new(lat, lon).map_err(|e| DataError::MalformedRow {
            path: path.display().to_string(),
            line,
            message: e.to_string(),
        })?;
        rows.push(TrajectoryRecord {
            vehicle_id: parse_field(&record, vi, "vehicle_id", path, line)?,
            slot_index: parse_field(&record, si, "slot_index", path, line)?,
            lat,
            lon,
        });
    }
    group_trajectories(rows)
}

/// Group and validate raw trajectory rows (shared by loader and converters).
pub fn group_trajectories<T: Scalar>(
    mut rows: Vec<TrajectoryRecord>,
) -> Result<Vec<Trajectory<T>>, DataError> {
    rows.sort_by_key(|r| (r.vehicle_id, r.slot_index));
    let mut out: Vec<Trajectory<T>> = Vec::new();
    for row in rows {
        if out.last().map(|t| t.vehicle_id) != Some(row.vehicle_id) {
            out.push(Trajectory {
                vehicle_id: row.vehicle_id,
                positions: Vec::new(),
            });
        }
        let traj = out.last_mut().unwrap();
        let expected = traj.positions.len() as u32;
        if row.slot_index < expected {
            return Err(DataError::DuplicateTrajectoryRow {
                vehicle_id: row.vehicle_id,
                slot: row.slot_index,
            });
        }
        if row.slot_index > expected {
            return Err(DataError::NonContiguousSlots {
                vehicle_id: row.vehicle_id,
                expected,
                found: row.slot_index,
            });
        }
        traj.positions
            .push(GeoPosition::new(T::of(row.lat), T::of(row.lon))?);
    }
    Ok(out)
}

/// Load `server_id,slot_index,flow_count` into dense per-server series.
pub fn load_flow(path: &Path) -> Result<Vec<FlowSeries>, DataError> {
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| DataError::MalformedRow {
            path: path.display().to_string(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let si = header_index(&headers, "server_id", path)?;
    let ti = header_index(&headers, "slot_index", path)?;
    let fi = header_index(&headers, "flow_count", path)?;

    let mut rows: Vec<(u32, u32, i64)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| DataError::MalformedRow {
            path: path.display().to_string(),
            line,
            message: e.to_string(),
        })?;
        rows.push((
            parse_field(&record, si, "server_id", path, line)?,
            parse_field(&record, ti, "slot_index", path, line)?,
            parse_field(&record, fi, "flow_count", path, line)?,
        ));
    }

    rows.sort_by_key(|&(s, t, _)| (s, t));
    let mut out: Vec<FlowSeries> = Vec::new();
    for (server_id, slot, value) in rows {
        if value < 0 {
            return Err(DataError::NegativeFlow {
                server_id,
                slot,
                value,
            });
        }
        if out.last().map(|f| f.server_id) != Some(server_id) {
            out.push(FlowSeries {
                server_id,
                counts: Vec::new(),
            });
        }
        let series = out.last_mut().unwrap();
        let expected = series.counts.len() as u32;
        if slot < expected {
            return Err(DataError::DuplicateFlowRow { server_id, slot });
        }
        if slot > expected {
            return Err(DataError::FlowGap {
                server_id,
                slot: expected,
            });
        }
        series.counts.push(value as u32);
    }
    Ok(out)
}

/// Write trajectories back out in the canonical CSV schema.
pub fn write_trajectories<T: Scalar>(
    path: &Path,
    trajectories: &[Trajectory<T>],
) -> Result<(), DataError> {
    let io_err = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = std::fs::File::create(path).map_err(io_err)?;
    writeln!(file, "vehicle_id,slot_index,lat,lon").map_err(io_err)?;
    for traj in trajectories {
        for (slot, pos) in traj.positions.iter().enumerate() {
            writeln!(
                file,
                "{},{},{},{}",
                traj.vehicle_id,
                slot,
                pos.lat_deg().to_f64_lossy(),
                pos.lon_deg().to_f64_lossy()
            )
            .map_err(io_err)?;
        }
    }
    Ok(())
}

/// Write flow series back out in the canonical CSV schema.
pub fn write_flow(path: &Path, series: &[FlowSeries]) -> Result<(), DataError> {
    let io_err = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = std::fs::File::create(path).map_err(io_err)?;
    writeln!(file, "server_id,slot_index,flow_count").map_err(io_err)?;
    for s in series {
        for (slot, count) in s.counts.iter().enumerate() {
            writeln!(file, "{},{},{}", s.server_id, slot, count).map_err(io_err)?;
        }
    }
    Ok(())
}

/// Synthetic traffic flow: per-server sinusoid (random phase) plus Gaussian
/// noise, clipped at zero and rounded to integer counts.
pub fn synth_flow(
    n_servers: usize,
    n_slots: usize,
    period: usize,
    base: f64,
    amplitude: f64,
    noise_std: f64,
    seed: u64,
) -> Result<Vec<FlowSeries>, DataError> {
    if period < 2 {
        return Err(DataError::PeriodTooShort(period));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_std.max(0.0)).expect("finite std");
    let mut out = Vec::with_capacity(n_servers);
    for server_id in 0..n_servers {
        let phase: f64 = rng.gen::<f64>() * period as f64;
        let mut counts = Vec::with_capacity(n_slots);
        for t in 0..n_slots {
            let angle = 2.0 * std::f64::consts::PI * (t as f64 + phase) / period as f64;
            let mut v = base + amplitude * angle.sin();
            if noise_std > 0.0 {
                v += noise.sample(&mut rng);
            }
            counts.push(v.max(0.0).round() as u32);
        }
        out.push(FlowSeries {
            server_id: server_id as u32,
            counts,
        });
    }
    Ok(out)
}

/// Synthetic vehicle trajectories: each vehicle ping-pongs along a polyline
/// route at a per-vehicle speed, bouncing at the endpoints.
pub fn synth_trajectories<T: Scalar>(
    route: &[GeoPosition<T>],
    n_vehicles: usize,
    n_slots: usize,
    slot_seconds: f64,
    speed_mps_min: f64,
    speed_mps_max: f64,
    seed: u64,
) -> Vec<Trajectory<T>> {
    assert!(route.len() >= 2, "route needs at least two waypoints");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Cumulative route arc length in f64 via equirectangular segments; the
    // desk-scale routes are short enough that this is exact for our purposes.
    let pts: Vec<(f64, f64)> = route
        .iter()
        .map(|p| (p.lat_deg().to_f64_lossy(), p.lon_deg().to_f64_lossy()))
        .collect();
    let seg_len = |a: (f64, f64), b: (f64, f64)| -> f64 {
        let r = 6_371_393.0f64;
        let dlat = (b.0 - a.0).to_radians();
        let dlon = (b.1 - a.1).to_radians();
        let mid = ((a.0 + b.0) / 2.0).to_radians();
        r * (dlat.powi(2) + (dlon * mid.cos()).powi(2)).sqrt()
    };
    let mut cum = vec![0.0f64];
    for w in pts.windows(2) {
        cum.push(cum.last().unwrap() + seg_len(w[0], w[1]));
    }
    let total = *cum.last().unwrap();

    let point_at = |s: f64| -> (f64, f64) {
        let s = s.clamp(0.0, total);
        let i = match cum.iter().position(|&c| c >= s) {
            Some(0) => 1,
            Some(i) => i,
            None => cum.len() - 1,
        };
        let seg = (cum[i] - cum[i - 1]).max(1e-9);
        let f = (s - cum[i - 1]) / seg;
        (
            pts[i - 1].0 + f * (pts[i].0 - pts[i - 1].0),
            pts[i - 1].1 + f * (pts[i].1 - pts[i - 1].1),
        )
    };

    (0..n_vehicles)
        .map(|vid| {
            let speed = speed_mps_min + rng.gen::<f64>() * (speed_mps_max - speed_mps_min);
            let start = rng.gen::<f64>() * total;
            let forward = rng.gen::<bool>();
            let mut s = start;
            let mut dir = if forward { 1.0 } else { -1.0 };
            let mut positions = Vec::with_capacity(n_slots);
            for _ in 0..n_slots {
                let (lat, lon) = point_at(s);
                positions.push(GeoPosition::new(T::of(lat), T::of(lon)).expect("route in range"));
                s += dir * speed * slot_seconds;
                while s < 0.0 || s > total {
                    if s < 0.0 {
                        s = -s;
                        dir = 1.0;
                    } else {
                        s = 2.0 * total - s;
                        dir = -1.0;
                    }
                }
            }
            Trajectory {
                vehicle_id: vid as u32,
                positions,
            }
        })
        .collect()
}

/// Slice a series into supervised windows: `len - window` windows, each
/// pairing `window` consecutive inputs with the immediately following value.
pub fn make_windows<T: Scalar>(
    server_id: u32,
    series: &[T],
    window: usize,
) -> Result<Vec<FlowWindow<T>>, DataError> {
    if series.len() <= window {
        return Err(DataError::SeriesTooShort {
            len: series.len(),
            window,
        });
    }
    Ok((0..series.len() - window)
        .map(|start| FlowWindow {
            server_id,
            inputs: series[start..start + window].to_vec(),
            target: series[start + window],
        })
        .collect())
}

/// Z-score a series with the population sigma, floored at 1e-6. Returns the
/// normalized series together with the mean and the divisor actually used,
/// so callers can de-scale predictions exactly.
pub fn zscore<T: Scalar>(series: &[T]) -> (Vec<T>, T, T) {
    let (mean, std) = mean_std(series);
    let divisor = std.max(T::of(1e-6));
    let normalized = series.iter().map(|&v| (v - mean) / divisor).collect();
    (normalized, mean, divisor)
}

/// Convert a PeMS-style 5-minute flow export (`station,timestamp,flow`
/// with one row per bin, rows grouped by station in time order) to the
/// canonical per-slot flow CSV by repeating each bin across its slots.
pub fn convert_pems_bins(
    rows: &[(u32, u32)],
    slots_per_bin: usize,
) -> Vec<FlowSeries> {
    let mut out: Vec<FlowSeries> = Vec::new();
    for &(station, flow) in rows {
        if out.last().map(|f| f.server_id) != Some(station) {
            out.push(FlowSeries {
                server_id: station,
                counts: Vec::new(),
            });
        }
        let series = out.last_mut().unwrap();
        for _ in 0..slots_per_bin {
            series.counts.push(flow);
        }
    }
    out
}
