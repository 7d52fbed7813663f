//! Two-period panel of right-censored observations and its CSV form.
//!
//! A dataset is a set of cells keyed by `(period, unit)`. Each cell holds
//! the observations of one unit in one period; all of them share the cell's
//! treatment. Units keep the order in which they first appear in the input.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::format::fmt_f64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Period {
    Pre,
    Post,
}

impl Period {
    pub const BOTH: [Period; 2] = [Period::Pre, Period::Post];

    pub fn code(self) -> u8 {
        match self {
            Period::Pre => 0,
            Period::Post => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Period::Pre),
            1 => Some(Period::Post),
            _ => None,
        }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Treatment {
    Control,
    Treated,
}

impl Treatment {
    pub fn code(self) -> u8 {
        match self {
            Treatment::Control => 0,
            Treatment::Treated => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Treatment::Control),
            1 => Some(Treatment::Treated),
            _ => None,
        }
    }
}

/// One subject: observed time `min(event time, censoring time)`, whether the
/// event was observed, the assigned treatment and optional covariates.
#[derive(Clone, Debug, PartialEq)]
pub struct CensoredObservation {
    pub time: f64,
    pub event: bool,
    pub treatment: Treatment,
    pub covariates: Vec<f64>,
}

impl CensoredObservation {
    pub fn new(time: f64, event: bool, treatment: Treatment) -> Result<Self> {
        Self::with_covariates(time, event, treatment, Vec::new())
    }

    pub fn with_covariates(
        time: f64,
        event: bool,
        treatment: Treatment,
        covariates: Vec<f64>,
    ) -> Result<Self> {
        if !time.is_finite() || time < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "observation time must be finite and nonnegative, got {time}"
            )));
        }
        if covariates.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite covariate".into()));
        }
        Ok(Self {
            time,
            event,
            treatment,
            covariates,
        })
    }

    pub fn event(time: f64) -> Self {
        Self::new(time, true, Treatment::Control).expect("valid event time")
    }

    pub fn censored(time: f64) -> Self {
        Self::new(time, false, Treatment::Control).expect("valid censoring time")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub treatment: Treatment,
    pub observations: Vec<CensoredObservation>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PanelDataset {
    units: Vec<String>,
    covariate_names: Vec<String>,
    cells: BTreeMap<(Period, usize), Cell>,
}

impl PanelDataset {
    pub fn builder(covariate_names: Vec<String>) -> PanelBuilder {
        PanelBuilder {
            data: PanelDataset {
                units: Vec::new(),
                covariate_names,
                cells: BTreeMap::new(),
            },
        }
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn unit_index(&self, unit: &str) -> Option<usize> {
        self.units.iter().position(|u| u == unit)
    }

    pub fn cell(&self, period: Period, unit: &str) -> Option<&Cell> {
        let idx = self.unit_index(unit)?;
        self.cells.get(&(period, idx))
    }

    /// Like [`PanelDataset::cell`] but an absent cell is an error naming it.
    pub fn require_cell(&self, period: Period, unit: &str) -> Result<&[CensoredObservation]> {
        self.cell(period, unit)
            .map(|c| c.observations.as_slice())
            .ok_or_else(|| Error::EmptyCell {
                period: period.to_string(),
                unit: unit.to_string(),
            })
    }

    pub fn treatment_of(&self, period: Period, unit: &str) -> Option<Treatment> {
        self.cell(period, unit).map(|c| c.treatment)
    }

    /// Cells in `(period, unit order)` order.
    pub fn cells(&self) -> impl Iterator<Item = (Period, &str, &Cell)> {
        self.cells
            .iter()
            .map(|(&(p, u), c)| (p, self.units[u].as_str(), c))
    }

    pub fn n_observations(&self) -> usize {
        self.cells.values().map(|c| c.observations.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn pooled_times(&self) -> Vec<f64> {
        self.cells
            .values()
            .flat_map(|c| c.observations.iter().map(|o| o.time))
            .collect()
    }

    /// Units with treatment 0 in both periods, in first-appearance order.
    pub fn control_units(&self) -> Vec<&str> {
        self.units
            .iter()
            .enumerate()
            .filter(|(idx, _)| {
                Period::BOTH.iter().all(|&p| {
                    self.cells
                        .get(&(p, *idx))
                        .is_some_and(|c| c.treatment == Treatment::Control)
                })
            })
            .map(|(_, u)| u.as_str())
            .collect()
    }

    pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file, schema)
    }

    /// Parses `unit,period,treatment,time,event[,x1,...]` rows. Row numbers in
    /// errors count data records from 1, excluding the header.
    pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let column = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let unit_col = column(&schema.unit)?;
        let period_col = column(&schema.period)?;
        let treatment_col = column(&schema.treatment)?;
        let time_col = column(&schema.time)?;
        let event_col = column(&schema.event)?;
        let fixed = [unit_col, period_col, treatment_col, time_col, event_col];

        let covariate_names: Vec<String> = match &schema.covariates {
            Some(names) => names.clone(),
            None => headers
                .iter()
                .enumerate()
                .filter(|(i, _)| !fixed.contains(i))
                .map(|(_, h)| h.to_string())
                .collect(),
        };
        let covariate_cols = covariate_names
            .iter()
            .map(|n| column(n))
            .collect::<Result<Vec<_>>>()?;

        let mut builder = PanelDataset::builder(covariate_names);
        for (i, record) in rdr.records().enumerate() {
            let row = i + 1;
            let record = record?;
            let field = |col: usize| record.get(col).unwrap_or("");
            let row_err = |message: String| Error::Row { row, message };

            let unit = field(unit_col).to_string();
            if unit.is_empty() {
                return Err(row_err("empty unit identifier".into()));
            }
            let period = parse_flag(field(period_col))
                .and_then(Period::from_code)
                .ok_or_else(|| row_err(format!("period must be 0 or 1, got `{}`", field(period_col))))?;
            let treatment = parse_flag(field(treatment_col))
                .and_then(Treatment::from_code)
                .ok_or_else(|| {
                    row_err(format!("treatment must be 0 or 1, got `{}`", field(treatment_col)))
                })?;
            let time: f64 = field(time_col)
                .parse()
                .map_err(|_| row_err(format!("unparseable time `{}`", field(time_col))))?;
            if !time.is_finite() || time < 0.0 {
                return Err(row_err(format!("time must be finite and nonnegative, got {time}")));
            }
            let event = match parse_flag(field(event_col)) {
                Some(0) => false,
                Some(1) => true,
                _ => return Err(row_err(format!("event must be 0 or 1, got `{}`", field(event_col)))),
            };
            let covariates = covariate_cols
                .iter()
                .map(|&c| {
                    field(c)
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| row_err(format!("unparseable covariate `{}`", field(c))))
                })
                .collect::<Result<Vec<_>>>()?;
            let obs = CensoredObservation {
                time,
                event,
                treatment,
                covariates,
            };
            builder.push(&unit, period, obs)?;
        }
        Ok(builder.finish())
    }

    /// Writes the canonical column layout; cells appear in period-major,
    /// unit-order order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["unit", "period", "treatment", "time", "event"];
        header.extend(self.covariate_names.iter().map(String::as_str));
        wtr.write_record(&header)?;
        for (period, unit, cell) in self.cells() {
            for obs in &cell.observations {
                let mut rec = vec![
                    unit.to_string(),
                    period.to_string(),
                    obs.treatment.code().to_string(),
                    fmt_f64(obs.time),
                    u8::from(obs.event).to_string(),
                ];
                rec.extend(obs.covariates.iter().map(|&x| fmt_f64(x)));
                wtr.write_record(&rec)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn parse_flag(s: &str) -> Option<u8> {
    match s {
        "0" => Some(0),
        "1" => Some(1),
        _ => s.parse::<f64>().ok().and_then(|x| {
            if x == 0.0 {
                Some(0)
            } else if x == 1.0 {
                Some(1)
            } else {
                None
            }
        }),
    }
}

pub struct PanelBuilder {
    data: PanelDataset,
}

impl PanelBuilder {
    pub fn push(&mut self, unit: &str, period: Period, obs: CensoredObservation) -> Result<()> {
        if obs.covariates.len() != self.data.covariate_names.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} covariates, got {}",
                self.data.covariate_names.len(),
                obs.covariates.len()
            )));
        }
        let idx = match self.data.unit_index(unit) {
            Some(i) => i,
            None => {
                self.data.units.push(unit.to_string());
                self.data.units.len() - 1
            }
        };
        let cell = self.data.cells.entry((period, idx)).or_insert_with(|| Cell {
            treatment: obs.treatment,
            observations: Vec::new(),
        });
        if cell.treatment != obs.treatment {
            return Err(Error::TreatmentConflict {
                period: period.to_string(),
                unit: unit.to_string(),
            });
        }
        cell.observations.push(obs);
        Ok(())
    }

    pub fn finish(self) -> PanelDataset {
        self.data
    }
}

/// Column names used when reading a panel CSV. `covariates: None` takes every
/// column not claimed by the five fixed ones, in header order.
#[derive(Clone, Debug)]
pub struct CsvSchema {
    pub unit: String,
    pub period: String,
    pub treatment: String,
    pub time: String,
    pub event: String,
    pub covariates: Option<Vec<String>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            unit: "unit".into(),
            period: "period".into(),
            treatment: "treatment".into(),
            time: "time".into(),
            event: "event".into(),
            covariates: None,
        }
    }
}

/// Control units and the single treated unit whose counterfactual is wanted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DonorPool {
    control_units: Vec<String>,
    target_unit: String,
}

impl DonorPool {
    /// All units under control in both periods, excluding the target. The
    /// target must be treated in the post-period.
    pub fn from_dataset(data: &PanelDataset, target: &str) -> Result<Self> {
        if data.unit_index(target).is_none() {
            return Err(Error::InvalidArgument(format!("unknown target unit `{target}`")));
        }
        match data.treatment_of(Period::Post, target) {
            Some(Treatment::Treated) => {}
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "target unit `{target}` is not treated in the post-period"
                )))
            }
        }
        let controls = data
            .control_units()
            .into_iter()
            .filter(|u| *u != target)
            .map(str::to_string)
            .collect();
        Self::new(controls, target.to_string())
    }

    pub fn new(control_units: Vec<String>, target_unit: String) -> Result<Self> {
        if control_units.is_empty() {
            return Err(Error::InvalidArgument("donor pool has no control units".into()));
        }
        if control_units.contains(&target_unit) {
            return Err(Error::InvalidArgument(format!(
                "target `{target_unit}` cannot be its own donor"
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = control_units.iter().find(|u| !seen.insert(u.as_str())) {
            return Err(Error::InvalidArgument(format!("duplicate donor `{dup}`")));
        }
        Ok(Self {
            control_units,
            target_unit,
        })
    }

    pub fn control_units(&self) -> &[String] {
        &self.control_units
    }

    pub fn target_unit(&self) -> &str {
        &self.target_unit
    }

    pub fn len(&self) -> usize {
        self.control_units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.control_units.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub period: Period,
    pub unit: String,
    pub count: usize,
    pub censored_fraction: f64,
    pub min_time: f64,
    pub max_time: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Diagnostic {
    EmptyCell { period: Period, unit: String },
    NoEvents { period: Period, unit: String },
    TreatedInPrePeriod { unit: String },
    NoControlUnits,
    TreatedUnitCount(usize),
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::EmptyCell { period, unit } => write!(f, "empty cell ({period}, {unit})"),
            Diagnostic::NoEvents { period, unit } => write!(f, "no events in cell ({period}, {unit})"),
            Diagnostic::TreatedInPrePeriod { unit } => {
                write!(f, "unit {unit} is treated in the pre-period")
            }
            Diagnostic::NoControlUnits => write!(f, "no unit is under control in both periods"),
            Diagnostic::TreatedUnitCount(n) => {
                write!(f, "expected exactly one unit treated in the post-period, found {n}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PanelReport {
    pub cells: Vec<CellSummary>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Summarises every cell and lists invariant violations. Never fails.
pub fn validate_panel(data: &PanelDataset) -> PanelReport {
    let mut cells = Vec::new();
    let mut diagnostics = Vec::new();

    for period in Period::BOTH {
        for unit in data.units() {
            match data.cell(period, unit) {
                None => diagnostics.push(Diagnostic::EmptyCell {
                    period,
                    unit: unit.clone(),
                }),
                Some(cell) if cell.observations.is_empty() => diagnostics.push(Diagnostic::EmptyCell {
                    period,
                    unit: unit.clone(),
                }),
                Some(cell) => {
                    let obs = &cell.observations;
                    let censored = obs.iter().filter(|o| !o.event).count();
                    if censored == obs.len() {
                        diagnostics.push(Diagnostic::NoEvents {
                            period,
                            unit: unit.clone(),
                        });
                    }
                    cells.push(CellSummary {
                        period,
                        unit: unit.clone(),
                        count: obs.len(),
                        censored_fraction: censored as f64 / obs.len() as f64,
                        min_time: obs.iter().map(|o| o.time).fold(f64::INFINITY, f64::min),
                        max_time: obs.iter().map(|o| o.time).fold(f64::NEG_INFINITY, f64::max),
                    });
                }
            }
        }
    }

    for unit in data.units() {
        if data.treatment_of(Period::Pre, unit) == Some(Treatment::Treated) {
            diagnostics.push(Diagnostic::TreatedInPrePeriod { unit: unit.clone() });
        }
    }
    if data.control_units().is_empty() {
        diagnostics.push(Diagnostic::NoControlUnits);
    }
    let treated = data
        .units()
        .iter()
        .filter(|u| data.treatment_of(Period::Post, u) == Some(Treatment::Treated))
        .count();
    if treated != 1 {
        diagnostics.push(Diagnostic::TreatedUnitCount(treated));
    }

    PanelReport { cells, diagnostics }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "unit,period,treatment,time,event\n\
        A,0,0,1.5,1\n\
        A,1,0,2.5,1\n\
        B,0,0,0.5,1\n\
        B,1,1,3.0,1\n";

    #[test]
    fn minimal_file_has_four_cells_of_one() {
        let data = PanelDataset::read_csv(MINIMAL.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(data.units(), ["A", "B"]);
        let cells: Vec<_> = data.cells().collect();
        assert_eq!(cells.len(), 4);
        assert!(cells.iter().all(|(_, _, c)| c.observations.len() == 1));
        assert_eq!(data.treatment_of(Period::Post, "B"), Some(Treatment::Treated));
        let report = validate_panel(&data);
        assert!(report.diagnostics.is_empty(), "{:?}", report.diagnostics);
    }

    #[test]
    fn negative_time_cites_row() {
        let mut text = String::from("unit,period,treatment,time,event\n");
        for i in 1..=10 {
            let t = if i == 7 { "-1" } else { "2.0" };
            text.push_str(&format!("U{},{},0,{t},1\n", i % 3, i % 2));
        }
        let err = PanelDataset::read_csv(text.as_bytes(), &CsvSchema::default()).unwrap_err();
        match err {
            Error::Row { row, .. } => assert_eq!(row, 7),
            other => panic!("unexpected error {other:?}"),
        }
        assert!(err_string(&text).contains("row 7"));
    }

    fn err_string(text: &str) -> String {
        PanelDataset::read_csv(text.as_bytes(), &CsvSchema::default())
            .unwrap_err()
            .to_string()
    }

    #[test]
    fn treatment_conflict_names_cell() {
        let text = "unit,period,treatment,time,event\nUS,1,0,1,1\nUS,1,1,2,1\n";
        let err = PanelDataset::read_csv(text.as_bytes(), &CsvSchema::default()).unwrap_err();
        match &err {
            Error::TreatmentConflict { period, unit } => {
                assert_eq!((period.as_str(), unit.as_str()), ("1", "US"))
            }
            other => panic!("unexpected error {other:?}"),
        }
        assert_eq!(err.to_string(), "conflicting treatment in cell (1, US)");
    }

    #[test]
    fn missing_column_is_named() {
        let text = "unit,period,treatment,event\nA,0,0,1\n";
        let err = PanelDataset::read_csv(text.as_bytes(), &CsvSchema::default()).unwrap_err();
        assert!(matches!(&err, Error::MissingColumn(c) if c == "time"));
    }

    #[test]
    fn covariates_are_remaining_columns() {
        let text = "unit,x1,period,treatment,time,event,x2\nA,0.5,0,0,1,1,2\n";
        let data = PanelDataset::read_csv(text.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(data.covariate_names(), ["x1", "x2"]);
        let obs = &data.require_cell(Period::Pre, "A").unwrap()[0];
        assert_eq!(obs.covariates, vec![0.5, 2.0]);
    }

    #[test]
    fn empty_and_all_censored_cells_are_reported() {
        let text = "unit,period,treatment,time,event\n\
            DE,0,0,1,1\nDE,1,0,1,1\nFR,1,0,1,0\nUS,0,0,1,1\nUS,1,1,2,1\n";
        let data = PanelDataset::read_csv(text.as_bytes(), &CsvSchema::default()).unwrap();
        let report = validate_panel(&data);
        let msgs: Vec<String> = report.diagnostics.iter().map(|d| d.to_string()).collect();
        assert!(msgs.contains(&"empty cell (0, FR)".to_string()), "{msgs:?}");
        assert!(msgs.iter().any(|m| m.starts_with("no events in cell")), "{msgs:?}");
    }

    #[test]
    fn cell_counts_match_rows() {
        let text = "unit,period,treatment,time,event\n\
            A,0,0,1,1\nA,0,0,2,0\nA,1,0,3,1\nB,0,0,1,1\nB,1,1,1,1\nB,1,1,4,0\nB,1,1,5,1\n";
        let data = PanelDataset::read_csv(text.as_bytes(), &CsvSchema::default()).unwrap();
        let report = validate_panel(&data);
        let count = |p, u: &str| {
            report
                .cells
                .iter()
                .find(|c| c.period == p && c.unit == u)
                .unwrap()
                .count
        };
        assert_eq!(count(Period::Pre, "A"), 2);
        assert_eq!(count(Period::Post, "A"), 1);
        assert_eq!(count(Period::Pre, "B"), 1);
        assert_eq!(count(Period::Post, "B"), 3);
        let b_post = report.cells.iter().find(|c| c.period == Period::Post && c.unit == "B").unwrap();
        assert!((b_post.censored_fraction - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!((b_post.min_time, b_post.max_time), (1.0, 5.0));
    }

    #[test]
    fn donor_pool_uses_first_appearance_order() {
        let text = "unit,period,treatment,time,event\n\
            C,0,0,1,1\nT,0,0,1,1\nA,0,0,1,1\nA,1,0,1,1\nT,1,1,1,1\nC,1,0,1,1\n";
        let data = PanelDataset::read_csv(text.as_bytes(), &CsvSchema::default()).unwrap();
        let pool = DonorPool::from_dataset(&data, "T").unwrap();
        assert_eq!(pool.control_units(), ["C", "A"]);
        assert!(DonorPool::from_dataset(&data, "A").is_err());
        assert!(DonorPool::new(vec!["C".into(), "C".into()], "T".into()).is_err());
    }

    #[test]
    fn ties_are_preserved() {
        let text = "unit,period,treatment,time,event\nA,0,0,2,1\nA,0,0,2,1\nA,0,0,2,0\n";
        let data = PanelDataset::read_csv(text.as_bytes(), &CsvSchema::default()).unwrap();
        let times: Vec<f64> = data.pooled_times();
        assert_eq!(times, vec![2.0, 2.0, 2.0]);
    }
}
