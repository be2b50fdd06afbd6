//! Acoustic models: steering vector evaluation for candidate points under
//! free far-field, free near-field, directivity-composed and tabulated
//! transfer function models.

use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

use num_complex::Complex;

use crate::{real, Error, Result, Scalar};

/// 3-D point or direction in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    pub fn distance(self, other: Self) -> T {
        (self - other).norm()
    }

    pub fn scaled(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    /// Unit vector in the same direction, or `None` for (near) zero length.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if n > T::zero() && n.is_finite() {
            Some(self.scaled(T::one() / n))
        } else {
            None
        }
    }
}

impl<T: Scalar> std::ops::Add for Vec3<T> {
    type Output = Self;

    fn add(self, other: Self) -> Self {
        Self::new(self.x + other.x, self.y + other.y, self.z + other.z)
    }
}

impl<T: Scalar> std::ops::Sub for Vec3<T> {
    type Output = Self;

    fn sub(self, other: Self) -> Self {
        Self::new(self.x - other.x, self.y - other.y, self.z - other.z)
    }
}

impl<T: fmt::Display> fmt::Display for Vec3<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// Microphone positions, optional orientations and the speed of sound.
#[derive(Debug, Clone)]
pub struct ArrayGeometry<T> {
    pub mic_positions: Vec<Vec3<T>>,
    pub mic_orientations: Option<Vec<Vec3<T>>>,
    pub speed_of_sound: T,
}

impl<T: Scalar> ArrayGeometry<T> {
    pub fn new(mic_positions: Vec<Vec3<T>>) -> Self {
        Self {
            mic_positions,
            mic_orientations: None,
            speed_of_sound: real(343.0),
        }
    }

    pub fn with_orientations(mut self, orientations: Vec<Vec3<T>>) -> Self {
        self.mic_orientations = Some(orientations);
        self
    }

    pub fn mics(&self) -> usize {
        self.mic_positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mics() < 2 {
            return Err(Error::InvalidParameter(
                "array needs at least 2 microphones".into(),
            ));
        }
        if !(self.speed_of_sound > T::zero()) {
            return Err(Error::InvalidParameter(
                "speed of sound must be positive".into(),
            ));
        }
        if let Some(orient) = &self.mic_orientations {
            if orient.len() != self.mics() {
                return Err(Error::InvalidParameter(format!(
                    "{} orientations for {} microphones",
                    orient.len(),
                    self.mics()
                )));
            }
            for (m, o) in orient.iter().enumerate() {
                if (o.norm() - T::one()).abs() > real(1e-6) {
                    return Err(Error::InvalidParameter(format!(
                        "orientation of microphone {m} is not unit length"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Model of the acoustic transfer function vector for one candidate point at
/// one frequency.
#[derive(Debug, Clone)]
pub struct SteeringVector<T> {
    pub values: Vec<Complex<T>>,
    pub frequency: T,
    pub point: Vec3<T>,
}

impl<T: Scalar> SteeringVector<T> {
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.norm_sqr() == T::zero())
    }
}

/// Free far-field model: unit-modulus time-of-flight phases,
/// `d_m = exp(-j 2 pi f r_m / c)`.
pub fn steer_far_field<T: Scalar>(
    geom: &ArrayGeometry<T>,
    p: Vec3<T>,
    f: T,
) -> SteeringVector<T> {
    let two_pi = real::<T>(2.0) * T::PI();
    let values = geom
        .mic_positions
        .iter()
        .map(|&pm| {
            let phase = -two_pi * f * p.distance(pm) / geom.speed_of_sound;
            Complex::from_polar(T::one(), phase)
        })
        .collect();
    SteeringVector {
        values,
        frequency: f,
        point: p,
    }
}

/// Free near-field model: time-of-flight phases with inverse-distance gains,
/// `d_m = exp(-j 2 pi f r~_m / c) / (4 pi r~_m)` where `r~_m = max(r_m, r_min)`.
///
/// The clamp keeps grid cells that coincide with a microphone evaluable; the
/// unclamped magnitude diverges there.
pub fn steer_near_field<T: Scalar>(
    geom: &ArrayGeometry<T>,
    p: Vec3<T>,
    f: T,
    r_min: T,
) -> SteeringVector<T> {
    debug_assert!(r_min > T::zero());
    let two_pi = real::<T>(2.0) * T::PI();
    let four_pi = real::<T>(4.0) * T::PI();
    let values = geom
        .mic_positions
        .iter()
        .map(|&pm| {
            let r = p.distance(pm).max(r_min);
            let phase = -two_pi * f * r / geom.speed_of_sound;
            Complex::from_polar(T::one() / (four_pi * r), phase)
        })
        .collect();
    SteeringVector {
        values,
        frequency: f,
        point: p,
    }
}

/// Cardioid directivity gain `0.5 (1 + cos angle)` between the microphone
/// orientation and the direction towards the source; both unit vectors.
pub fn cardioid_gain<T: Scalar>(mic_orientation: Vec3<T>, direction_to_source: Vec3<T>) -> T {
    let c = mic_orientation.dot(direction_to_source);
    (real::<T>(0.5) * (T::one() + c)).max(T::zero())
}

/// Element-wise (Hadamard) composition of a steering vector with real
/// non-negative directivity gains.
pub fn compose_directivity<T: Scalar>(
    d: &SteeringVector<T>,
    gains: &[T],
) -> SteeringVector<T> {
    assert_eq!(d.values.len(), gains.len(), "gain count must match mics");
    SteeringVector {
        values: d
            .values
            .iter()
            .zip(gains)
            .map(|(v, &g)| v * g)
            .collect(),
        frequency: d.frequency,
        point: d.point,
    }
}

/// Cardioid gains of every microphone towards a source point.
///
/// The source direction is taken from each microphone position; a point that
/// coincides with a microphone gets the broadside gain 0.5.
pub fn cardioid_gains_towards<T: Scalar>(
    geom: &ArrayGeometry<T>,
    p: Vec3<T>,
) -> Result<Vec<T>> {
    let orientations = geom.mic_orientations.as_ref().ok_or_else(|| {
        Error::InvalidParameter("directivity model needs microphone orientations".into())
    })?;
    Ok(geom
        .mic_positions
        .iter()
        .zip(orientations)
        .map(|(&pm, &o)| match (p - pm).normalized() {
            Some(u) => cardioid_gain(o, u),
            None => real(0.5),
        })
        .collect())
}

/// Tabulated acoustic transfer functions on a fixed (point, frequency) grid.
///
/// Lookup is by exact point index; the candidate grid of the consuming run
/// must be the table grid. No interpolation.
#[derive(Debug, Clone)]
pub struct AtfTable<T> {
    points: Vec<Vec3<T>>,
    freqs: Vec<T>,
    mics: usize,
    /// `[point][bin][mic]`, flattened.
    gains: Vec<Complex<T>>,
}

impl<T: Scalar> AtfTable<T> {
    pub fn from_parts(
        points: Vec<Vec3<T>>,
        freqs: Vec<T>,
        mics: usize,
        gains: Vec<Complex<T>>,
    ) -> Result<Self> {
        if mics < 2 {
            return Err(Error::InvalidParameter(
                "ATF table needs at least 2 microphones".into(),
            ));
        }
        if points.is_empty() || freqs.is_empty() {
            return Err(Error::InvalidParameter("ATF table is empty".into()));
        }
        if gains.len() != points.len() * freqs.len() * mics {
            return Err(Error::InvalidParameter(format!(
                "ATF table has {} gains, expected {}",
                gains.len(),
                points.len() * freqs.len() * mics
            )));
        }
        Ok(Self {
            points,
            freqs,
            mics,
            gains,
        })
    }

    /// Builds a table by sampling another model over (points, frequencies).
    pub fn tabulate(
        geom: &ArrayGeometry<T>,
        model: &AcousticModel<T>,
        points: &[Vec3<T>],
        freqs: &[T],
    ) -> Result<Self> {
        let mut gains = Vec::with_capacity(points.len() * freqs.len() * geom.mics());
        for &p in points {
            for &f in freqs {
                let d = model.steer_geometric(geom, p, f)?;
                gains.extend(d.values);
            }
        }
        Self::from_parts(points.to_vec(), freqs.to_vec(), geom.mics(), gains)
    }

    pub fn points(&self) -> &[Vec3<T>] {
        &self.points
    }

    pub fn frequencies(&self) -> &[T] {
        &self.freqs
    }

    pub fn mics(&self) -> usize {
        self.mics
    }

    /// Checks that the table frequency axis matches the consuming pipeline's
    /// STFT bin frequencies (count and values).
    pub fn validate_bins(&self, bin_freqs: &[T]) -> Result<()> {
        if self.freqs.len() != bin_freqs.len() {
            return Err(Error::Config(format!(
                "ATF table has {} frequency bins, pipeline expects {}",
                self.freqs.len(),
                bin_freqs.len()
            )));
        }
        for (k, (&have, &want)) in self.freqs.iter().zip(bin_freqs).enumerate() {
            let tol = real::<T>(1e-6) * (T::one() + want.abs());
            if (have - want).abs() > tol {
                return Err(Error::Config(format!(
                    "ATF table bin {k} at {have} Hz, pipeline expects {want} Hz"
                )));
            }
        }
        Ok(())
    }

    pub fn steer(&self, point_index: usize, bin: usize) -> Result<SteeringVector<T>> {
        if point_index >= self.points.len() {
            return Err(Error::UnknownTablePoint(point_index));
        }
        if bin >= self.freqs.len() {
            return Err(Error::InvalidParameter(format!(
                "bin {bin} outside ATF table with {} bins",
                self.freqs.len()
            )));
        }
        let base = (point_index * self.freqs.len() + bin) * self.mics;
        Ok(SteeringVector {
            values: self.gains[base..base + self.mics].to_vec(),
            frequency: self.freqs[bin],
            point: self.points[point_index],
        })
    }
}

/// Lookup into a tabulated model; exact point index, no interpolation.
pub fn steer_from_table<T: Scalar>(
    table: &AtfTable<T>,
    point_index: usize,
    bin: usize,
) -> Result<SteeringVector<T>> {
    table.steer(point_index, bin)
}

/// The pluggable propagation model behind a steering evaluation.
#[derive(Debug, Clone)]
pub enum AcousticModel<T> {
    FarField,
    NearField { r_min: T },
    /// Base model composed with frequency-independent cardioid gains from
    /// the array's microphone orientations.
    Composed { base: Box<AcousticModel<T>> },
    Table(AtfTable<T>),
}

impl<T: Scalar> AcousticModel<T> {
    /// Default near-field clamp radius in meters.
    pub const DEFAULT_R_MIN: f64 = 0.05;

    /// Steering vector for grid point `point_index` located at `p`, at
    /// frequency `f` (STFT bin `bin` for tabulated models).
    pub fn steer(
        &self,
        geom: &ArrayGeometry<T>,
        p: Vec3<T>,
        point_index: usize,
        f: T,
        bin: usize,
    ) -> Result<SteeringVector<T>> {
        match self {
            AcousticModel::Table(table) => table.steer(point_index, bin),
            _ => self.steer_geometric(geom, p, f),
        }
    }

    /// Steering for the geometric (non-tabulated) models.
    pub fn steer_geometric(
        &self,
        geom: &ArrayGeometry<T>,
        p: Vec3<T>,
        f: T,
    ) -> Result<SteeringVector<T>> {
        match self {
            AcousticModel::FarField => Ok(steer_far_field(geom, p, f)),
            AcousticModel::NearField { r_min } => Ok(steer_near_field(geom, p, f, *r_min)),
            AcousticModel::Composed { base } => {
                let d = base.steer_geometric(geom, p, f)?;
                let gains = cardioid_gains_towards(geom, p)?;
                Ok(compose_directivity(&d, &gains))
            }
            AcousticModel::Table(_) => Err(Error::InvalidParameter(
                "tabulated model needs a point index and bin".into(),
            )),
        }
    }

    pub fn requires_orientations(&self) -> bool {
        matches!(self, AcousticModel::Composed { .. })
    }
}

/// Loads an ATF table and its array geometry from CSV files.
///
/// Table format: header `point_index,x,y,z,freq_hz,mic_index,re,im`, one row
/// per (point, bin, mic), every triple present exactly once. Geometry format:
/// header `mic_index,x,y,z` or `mic_index,x,y,z,ox,oy,oz`.
pub fn load_atf_table<T: Scalar>(
    table_path: &Path,
    geometry_path: &Path,
) -> Result<(AtfTable<T>, ArrayGeometry<T>)> {
    let geom = load_geometry_csv(geometry_path)?;
    let table = load_table_csv(table_path, geom.mics())?;
    Ok((table, geom))
}

fn parse_real<T: Scalar>(field: &str, what: &str, line: usize) -> Result<T> {
    field
        .trim()
        .parse::<f64>()
        .map(real::<T>)
        .map_err(|_| Error::Config(format!("line {line}: bad {what} value {field:?}")))
}

fn parse_index(field: &str, what: &str, line: usize) -> Result<usize> {
    field
        .trim()
        .parse::<usize>()
        .map_err(|_| Error::Config(format!("line {line}: bad {what} value {field:?}")))
}

fn load_geometry_csv<T: Scalar>(path: &Path) -> Result<ArrayGeometry<T>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut rows: Vec<(usize, Vec3<T>, Option<Vec3<T>>)> = Vec::new();
    let mut with_orientation = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || idx == 0 {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        let has_orientation = match fields.len() {
            4 => false,
            7 => true,
            n => {
                return Err(Error::Config(format!(
                    "line {lineno}: geometry row has {n} fields, expected 4 or 7"
                )))
            }
        };
        match with_orientation {
            None => with_orientation = Some(has_orientation),
            Some(prev) if prev != has_orientation => {
                return Err(Error::Config(format!(
                    "line {lineno}: mixed geometry row widths"
                )))
            }
            _ => {}
        }
        let mic = parse_index(fields[0], "mic_index", lineno)?;
        let pos = Vec3::new(
            parse_real(fields[1], "x", lineno)?,
            parse_real(fields[2], "y", lineno)?,
            parse_real(fields[3], "z", lineno)?,
        );
        let orientation = if has_orientation {
            Some(Vec3::new(
                parse_real(fields[4], "ox", lineno)?,
                parse_real(fields[5], "oy", lineno)?,
                parse_real(fields[6], "oz", lineno)?,
            ))
        } else {
            None
        };
        rows.push((mic, pos, orientation));
    }
    rows.sort_by_key(|r| r.0);
    for (expect, row) in rows.iter().enumerate() {
        if row.0 != expect {
            return Err(Error::Config(format!(
                "geometry mic indices must be 0..M-1, found {}",
                row.0
            )));
        }
    }
    let positions: Vec<Vec3<T>> = rows.iter().map(|r| r.1).collect();
    let mut geom = ArrayGeometry::new(positions);
    if with_orientation == Some(true) {
        geom = geom.with_orientations(rows.iter().map(|r| r.2.unwrap()).collect());
    }
    geom.validate()?;
    Ok(geom)
}

fn load_table_csv<T: Scalar>(path: &Path, mics: usize) -> Result<AtfTable<T>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    struct Row<T> {
        point: usize,
        pos: Vec3<T>,
        freq: T,
        mic: usize,
        value: Complex<T>,
    }
    let mut rows: Vec<Row<T>> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || idx == 0 {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Config(format!(
                "line {lineno}: ATF row has {} fields, expected 8",
                fields.len()
            )));
        }
        rows.push(Row {
            point: parse_index(fields[0], "point_index", lineno)?,
            pos: Vec3::new(
                parse_real(fields[1], "x", lineno)?,
                parse_real(fields[2], "y", lineno)?,
                parse_real(fields[3], "z", lineno)?,
            ),
            freq: parse_real(fields[4], "freq_hz", lineno)?,
            mic: parse_index(fields[5], "mic_index", lineno)?,
            value: Complex::new(
                parse_real(fields[6], "re", lineno)?,
                parse_real(fields[7], "im", lineno)?,
            ),
        });
    }
    if rows.is_empty() {
        return Err(Error::Config("ATF table file has no data rows".into()));
    }

    let n_points = rows.iter().map(|r| r.point).max().unwrap() + 1;
    let mut freqs: Vec<T> = Vec::new();
    for r in &rows {
        if !freqs.contains(&r.freq) {
            freqs.push(r.freq);
        }
    }
    freqs.sort_by(|a, b| a.partial_cmp(b).expect("finite frequencies"));
    let bin_of = |f: T| freqs.iter().position(|&g| g == f).unwrap();

    let n_bins = freqs.len();
    let mut gains = vec![Complex::new(T::zero(), T::zero()); n_points * n_bins * mics];
    let mut seen = vec![false; n_points * n_bins * mics];
    let mut points = vec![Vec3::zero(); n_points];
    let mut point_seen = vec![false; n_points];
    for r in &rows {
        if r.mic >= mics {
            return Err(Error::Config(format!(
                "ATF row references mic {} but geometry has {}",
                r.mic, mics
            )));
        }
        let slot = (r.point * n_bins + bin_of(r.freq)) * mics + r.mic;
        if seen[slot] {
            return Err(Error::Config(format!(
                "duplicate ATF entry for point {}, {} Hz, mic {}",
                r.point, r.freq, r.mic
            )));
        }
        seen[slot] = true;
        gains[slot] = r.value;
        if point_seen[r.point] {
            if points[r.point] != r.pos {
                return Err(Error::Config(format!(
                    "point {} has inconsistent coordinates",
                    r.point
                )));
            }
        } else {
            points[r.point] = r.pos;
            point_seen[r.point] = true;
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        let point = missing / (n_bins * mics);
        let bin = missing / mics % n_bins;
        let mic = missing % mics;
        return Err(Error::Config(format!(
            "ATF table incomplete: missing point {point}, bin {bin}, mic {mic}"
        )));
    }
    AtfTable::from_parts(points, freqs, mics, gains)
}
