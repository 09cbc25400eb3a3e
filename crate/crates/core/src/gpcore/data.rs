use crate::error::{Error, Result};

/// Why a point is in the conditioning set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Init,
    Constraint,
    Past,
    Virtual,
}

/// Observation at one time; `None` masks a channel. A zero noise variance
/// marks a hard constraint and is realized as jitter during assembly.
#[derive(Clone, Debug, PartialEq)]
pub struct DataPoint {
    pub t: f64,
    pub values: Vec<Option<f64>>,
    pub noise_var: Vec<f64>,
    pub role: Role,
}

impl DataPoint {
    /// All channels observed with zero noise.
    pub fn hard(t: f64, z: &[f64], role: Role) -> Self {
        DataPoint {
            t,
            values: z.iter().copied().map(Some).collect(),
            noise_var: vec![0.0; z.len()],
            role,
        }
    }

    pub fn soft(t: f64, z: &[f64], noise_var: &[f64], role: Role) -> Self {
        DataPoint {
            t,
            values: z.iter().copied().map(Some).collect(),
            noise_var: noise_var.to_vec(),
            role,
        }
    }

    pub fn n_z(&self) -> usize {
        self.values.len()
    }

    pub fn observed_channels(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(c, v)| v.map(|v| (c, v)))
    }

    fn validate(&self, n_z: usize) -> Result<()> {
        if self.values.len() != n_z || self.noise_var.len() != n_z {
            return Err(Error::DimensionMismatch(format!(
                "point at t={} has {} values / {} noise entries, expected {n_z}",
                self.t,
                self.values.len(),
                self.noise_var.len()
            )));
        }
        if !self.t.is_finite() {
            return Err(Error::InvalidObservation("non-finite time".into()));
        }
        for (c, v) in self.observed_channels() {
            let nv = self.noise_var[c];
            if !v.is_finite() || !nv.is_finite() || nv < 0.0 {
                return Err(Error::InvalidObservation(format!(
                    "t={} channel {c}: value {v}, noise variance {nv}",
                    self.t
                )));
            }
        }
        Ok(())
    }
}

/// Tolerance under which two time stamps are treated as the same instant.
pub(crate) fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Time-ordered observations with at most one point per instant.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n_z: usize,
    points: Vec<DataPoint>,
}

impl Dataset {
    pub fn empty(n_z: usize) -> Self {
        Dataset {
            n_z,
            points: Vec::new(),
        }
    }

    /// Sorts by time and merges points at the same instant. Channels observed
    /// in both must agree exactly; the smaller noise variance is kept.
    pub fn new(n_z: usize, points: impl IntoIterator<Item = DataPoint>) -> Result<Self> {
        let mut points: Vec<DataPoint> = points.into_iter().collect();
        for p in &points {
            p.validate(n_z)?;
        }
        points.sort_by(|a, b| a.t.total_cmp(&b.t));
        let mut merged: Vec<DataPoint> = Vec::with_capacity(points.len());
        for p in points {
            match merged.last_mut() {
                Some(last) if same_time(last.t, p.t) => merge_into(last, p)?,
                _ => merged.push(p),
            }
        }
        Ok(Dataset { n_z, points: merged })
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of scalar observations (unmasked channel entries).
    pub fn n_obs(&self) -> usize {
        self.points.iter().map(|p| p.observed_channels().count()).sum()
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = &DataPoint> {
        self.points.iter().filter(move |p| p.role == role)
    }
}

fn merge_into(into: &mut DataPoint, other: DataPoint) -> Result<()> {
    for c in 0..into.values.len() {
        match (into.values[c], other.values[c]) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::ConflictingObservation { t: into.t, channel: c });
            }
            (Some(_), Some(_)) => {
                into.noise_var[c] = into.noise_var[c].min(other.noise_var[c]);
            }
            (None, Some(b)) => {
                into.values[c] = Some(b);
                into.noise_var[c] = other.noise_var[c];
            }
            _ => {}
        }
    }
    Ok(())
}
