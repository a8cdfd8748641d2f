use std::collections::BTreeSet;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::VehicleClass;
use crate::ghr::GhrParams;
use crate::units::LengthUnit;

/// Most clusters a single follower class may define.
pub const MAX_CLUSTERS_PER_CLASS: usize = 30;

const HEADER: [&str; 7] = ["cluster_id", "class", "c", "m", "l", "tau", "units"];

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("cluster library: {0}")]
    Csv(#[from] csv::Error),
    #[error("cluster library header must be `{}`, found `{found}`", HEADER.join(","))]
    Header { found: String },
    #[error("cluster library row {row}: missing field `{field}`")]
    MissingField { row: u64, field: &'static str },
    #[error("cluster library row {row}: invalid {field} `{value}`")]
    InvalidField { row: u64, field: &'static str, value: String },
    #[error("cluster library row {row}: unknown units tag `{value}` (expected si or feet)")]
    UnknownUnits { row: u64, value: String },
    #[error("cluster library row {row}: duplicate cluster {cluster_id} for class {class}")]
    Duplicate { row: u64, cluster_id: u32, class: &'static str },
    #[error("cluster library defines more than {MAX_CLUSTERS_PER_CLASS} clusters for class {class}")]
    TooMany { class: &'static str },
    #[error("cluster library row {row}: {reason}")]
    Params { row: u64, reason: String },
    #[error("cluster library is empty")]
    Empty,
}

/// Which cluster group a definition belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterClass {
    Car,
    Heavy,
}

impl ClusterClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ClusterClass::Car => "car",
            ClusterClass::Heavy => "heavy",
        }
    }

    /// Library used for a follower of `class`, and whether that is a fallback.
    pub fn for_follower(class: VehicleClass) -> (ClusterClass, bool) {
        match class {
            VehicleClass::PassengerCar => (ClusterClass::Car, false),
            VehicleClass::SuvLightTruck => (ClusterClass::Car, true),
            VehicleClass::HeavyVehicle => (ClusterClass::Heavy, false),
        }
    }
}

impl std::str::FromStr for ClusterClass {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "car" | "passenger_car" => Ok(ClusterClass::Car),
            "heavy" | "truck" | "heavy_vehicle" => Ok(ClusterClass::Heavy),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterDefinition {
    pub cluster_id: u32,
    pub class: ClusterClass,
    /// SI parameters.
    pub params: GhrParams,
}

/// Car and heavy-vehicle cluster groups, each sorted by cluster id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClusterLibrary {
    car: Vec<ClusterDefinition>,
    heavy: Vec<ClusterDefinition>,
}

impl ClusterLibrary {
    pub fn new(defs: impl IntoIterator<Item = ClusterDefinition>) -> Result<Self, LibraryError> {
        let mut lib = ClusterLibrary::default();
        let mut seen = BTreeSet::new();
        for (row, d) in defs.into_iter().enumerate() {
            if !seen.insert((d.class, d.cluster_id)) {
                return Err(LibraryError::Duplicate { row: row as u64 + 1, cluster_id: d.cluster_id, class: d.class.as_str() });
            }
            d.params.validate().map_err(|e| LibraryError::Params { row: row as u64 + 1, reason: e.to_string() })?;
            lib.group_mut(d.class).push(d);
        }
        for class in [ClusterClass::Car, ClusterClass::Heavy] {
            let group = lib.group_mut(class);
            if group.len() > MAX_CLUSTERS_PER_CLASS {
                return Err(LibraryError::TooMany { class: class.as_str() });
            }
            group.sort_by_key(|d| d.cluster_id);
        }
        Ok(lib)
    }

    fn group_mut(&mut self, class: ClusterClass) -> &mut Vec<ClusterDefinition> {
        match class {
            ClusterClass::Car => &mut self.car,
            ClusterClass::Heavy => &mut self.heavy,
        }
    }

    pub fn group(&self, class: ClusterClass) -> &[ClusterDefinition] {
        match class {
            ClusterClass::Car => &self.car,
            ClusterClass::Heavy => &self.heavy,
        }
    }

    pub fn get(&self, class: ClusterClass, cluster_id: u32) -> Option<&ClusterDefinition> {
        self.group(class).iter().find(|d| d.cluster_id == cluster_id)
    }

    pub fn len(&self) -> usize {
        self.car.len() + self.heavy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &ClusterDefinition> {
        self.car.iter().chain(&self.heavy)
    }

    /// Loads the `cluster_id,class,c,m,l,tau,units` CSV format.
    ///
    /// Lines starting with `#` are comments. A `feet` units tag converts `c`
    /// to SI; `m`, `l` and `tau` are unit-free or already in seconds.
    pub fn from_csv<R: Read>(source: R) -> Result<Self, LibraryError> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(source);
        let header = reader.headers()?.clone();
        if header.iter().map(|h| h.to_ascii_lowercase()).ne(HEADER.iter().map(|h| h.to_string())) {
            return Err(LibraryError::Header { found: header.iter().collect::<Vec<_>>().join(",") });
        }
        let mut defs = Vec::new();
        let mut seen = BTreeSet::new();
        for record in reader.records() {
            let record = record?;
            let row = record.position().map_or(0, |p| p.line());
            let field = |i: usize| -> Result<&str, LibraryError> {
                record
                    .get(i)
                    .filter(|s| !s.is_empty())
                    .ok_or(LibraryError::MissingField { row, field: HEADER[i] })
            };
            let number = |i: usize| -> Result<f64, LibraryError> {
                let s = field(i)?;
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| LibraryError::InvalidField { row, field: HEADER[i], value: s.to_string() })
            };
            let id_text = field(0)?;
            let cluster_id: u32 = id_text
                .parse()
                .map_err(|_| LibraryError::InvalidField { row, field: "cluster_id", value: id_text.to_string() })?;
            let class_text = field(1)?;
            let class: ClusterClass = class_text
                .parse()
                .map_err(|_| LibraryError::InvalidField { row, field: "class", value: class_text.to_string() })?;
            let (c, m, l, tau) = (number(2)?, number(3)?, number(4)?, number(5)?);
            let units_text = field(6)?;
            let units = match units_text.to_ascii_lowercase().as_str() {
                "si" | "m" | "meters" => LengthUnit::Meters,
                "feet" | "ft" => LengthUnit::Feet,
                _ => return Err(LibraryError::UnknownUnits { row, value: units_text.to_string() }),
            };
            if !seen.insert((class, cluster_id)) {
                return Err(LibraryError::Duplicate { row, cluster_id, class: class.as_str() });
            }
            let params = GhrParams::new(c_to_si(c, m, l, units), m, l, tau)
                .map_err(|e| LibraryError::Params { row, reason: e.to_string() })?;
            defs.push(ClusterDefinition { cluster_id, class, params });
        }
        if defs.is_empty() {
            return Err(LibraryError::Empty);
        }
        Self::new(defs)
    }

    /// Serializes in the CSV load format with SI units.
    pub fn to_csv(&self) -> String {
        let mut out = HEADER.join(",") + "\n";
        for d in self.iter() {
            let p = d.params;
            out += &format!("{},{},{},{},{},{},si\n", d.cluster_id, d.class.as_str(), p.c, p.m, p.l, p.tau);
        }
        out
    }
}

/// Converts `c` calibrated on feet-based speeds and spacings to SI.
///
/// With `a`, `v`, `Δv` and `Δx` all scaled by the same length factor `k`,
/// `c` picks up a factor `k^(l − m)`.
pub fn c_to_si(c: f64, m: f64, l: f64, units: LengthUnit) -> f64 {
    match units {
        LengthUnit::Meters => c,
        LengthUnit::Feet => c * units.to_meters().powf(l - m),
    }
}

/// CSV text of the bundled placeholder library.
pub const PLACEHOLDER_CSV: &str = include_str!("../../data/placeholder_clusters.csv");

/// The bundled 30 + 30 placeholder library.
///
/// These parameters are synthetic. They are spread so every tuple is
/// distinct and each simulates a stable follower near 15 m/s and 25 m of
/// spacing. They are not calibrated values; supply a real library for any
/// behavioral interpretation.
pub fn placeholder_library() -> ClusterLibrary {
    ClusterLibrary::from_csv(PLACEHOLDER_CSV.as_bytes()).expect("bundled placeholder library parses")
}

/// Regenerates the text of [`PLACEHOLDER_CSV`].
pub fn placeholder_csv() -> String {
    let mut out = String::from(
        "# SYNTHETIC PLACEHOLDER LIBRARY. Not calibrated driver clusters.\n\
         # Parameters are spread for testing and demonstration only.\n",
    );
    out += &(HEADER.join(",") + "\n");
    for (class, gain_lo, offset) in [(ClusterClass::Car, 0.25, 0usize), (ClusterClass::Heavy, 0.2, 5)] {
        for k in 1..=MAX_CLUSTERS_PER_CLASS {
            let j = |mult: usize| ((k + offset) * mult) % MAX_CLUSTERS_PER_CLASS;
            let m = j(7) as f64 / 29.0;
            let l = 0.1 + 0.06 * j(11) as f64;
            let tau = 0.5 + 0.05 * j(17) as f64;
            let gain = gain_lo + 0.012 * j(13) as f64;
            // Effective gain c·v^m/Δx^l at v = 15 m/s, Δx = 25 m.
            let c = gain * 25f64.powf(l) / 15f64.powf(m);
            out += &format!("{k},{},{c:.6},{m:.6},{l:.6},{tau:.2},si\n", class.as_str());
        }
    }
    out
}
