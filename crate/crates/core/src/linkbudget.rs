//! Link budget: free-space loss, knife-edge diffraction loss, received power
//! and per-SF receiver sensitivity.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinkBudgetError {
    #[error("distance must be positive, got {0} km")]
    Distance(f64),
    #[error("frequency must be positive, got {0} MHz")]
    Frequency(f64),
    #[error("bandwidth must be positive, got {0} kHz")]
    Bandwidth(f64),
    #[error("extra loss must be non-negative, got {0} dB")]
    ExtraLoss(f64),
    #[error("spreading factor must be 7..=12, got {0}")]
    SpreadingFactor(i64),
    #[error("sensitivity table: {0}")]
    Table(String),
    #[error("sensitivity file line {line}: {reason}")]
    TableSyntax { line: usize, reason: String },
}

/// LoRa spreading factor, 7 through 12.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct SpreadingFactor(u8);

impl SpreadingFactor {
    pub const MIN: u8 = 7;
    pub const MAX: u8 = 12;

    pub fn new(sf: u8) -> Result<Self, LinkBudgetError> {
        if (Self::MIN..=Self::MAX).contains(&sf) {
            Ok(SpreadingFactor(sf))
        } else {
            Err(LinkBudgetError::SpreadingFactor(sf as i64))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = SpreadingFactor> {
        (Self::MIN..=Self::MAX).map(SpreadingFactor)
    }

    fn index(self) -> usize {
        (self.0 - Self::MIN) as usize
    }
}

impl TryFrom<u8> for SpreadingFactor {
    type Error = LinkBudgetError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        SpreadingFactor::new(v)
    }
}

impl From<SpreadingFactor> for u8 {
    fn from(sf: SpreadingFactor) -> u8 {
        sf.0
    }
}

impl fmt::Display for SpreadingFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SF{}", self.0)
    }
}

impl FromStr for SpreadingFactor {
    type Err = LinkBudgetError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let digits = t.strip_prefix("SF").or_else(|| t.strip_prefix("sf")).unwrap_or(t);
        let n: i64 = digits.parse().map_err(|_| LinkBudgetError::Table(format!("not a spreading factor: `{s}`")))?;
        u8::try_from(n)
            .map_err(|_| LinkBudgetError::SpreadingFactor(n))
            .and_then(SpreadingFactor::new)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioConfig {
    pub erp_dbm: f64,
    pub frequency_mhz: f64,
    pub bandwidth_khz: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            erp_dbm: 14.0,
            frequency_mhz: 868.0,
            bandwidth_khz: 125.0,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<(), LinkBudgetError> {
        if !(self.frequency_mhz > 0.0 && self.frequency_mhz.is_finite()) {
            return Err(LinkBudgetError::Frequency(self.frequency_mhz));
        }
        if !(self.bandwidth_khz > 0.0 && self.bandwidth_khz.is_finite()) {
            return Err(LinkBudgetError::Bandwidth(self.bandwidth_khz));
        }
        Ok(())
    }
}

/// Receiver sensitivity in dBm for SF7..SF12.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 6]", into = "[f64; 6]")]
pub struct SensitivityTable([f64; 6]);

const MIN_STEP_DB: f64 = 1.5;
const MAX_STEP_DB: f64 = 3.5;

impl Default for SensitivityTable {
    fn default() -> Self {
        SensitivityTable([-127.5, -130.0, -132.5, -135.0, -137.5, -140.0])
    }
}

impl TryFrom<[f64; 6]> for SensitivityTable {
    type Error = LinkBudgetError;
    fn try_from(v: [f64; 6]) -> Result<Self, Self::Error> {
        SensitivityTable::new(v)
    }
}

impl From<SensitivityTable> for [f64; 6] {
    fn from(t: SensitivityTable) -> Self {
        t.0
    }
}

impl SensitivityTable {
    /// `dbm[0]` is SF7, `dbm[5]` is SF12.
    pub fn new(dbm: [f64; 6]) -> Result<Self, LinkBudgetError> {
        for (i, w) in dbm.windows(2).enumerate() {
            let step = w[0] - w[1];
            if !(MIN_STEP_DB..=MAX_STEP_DB).contains(&step) {
                return Err(LinkBudgetError::Table(format!(
                    "SF{} -> SF{} step is {step} dB, expected a decrease of {MIN_STEP_DB}..={MAX_STEP_DB} dB",
                    i + 7,
                    i + 8
                )));
            }
        }
        Ok(SensitivityTable(dbm))
    }

    pub fn get(&self, sf: SpreadingFactor) -> f64 {
        self.0[sf.index()]
    }

    /// Parse `sf = dbm` lines (`12 = -140` or `SF12 = -140`) over the
    /// defaults. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, LinkBudgetError> {
        let mut values = SensitivityTable::default().0;
        let mut seen = [false; 6];
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |reason: String| LinkBudgetError::TableSyntax { line: line_no, reason };
            let (k, v) = line.split_once('=').ok_or_else(|| syntax("expected `sf = dbm`".into()))?;
            let sf: SpreadingFactor = k.parse().map_err(|e: LinkBudgetError| syntax(e.to_string()))?;
            let dbm: f64 = v.trim().parse().map_err(|_| syntax(format!("bad dBm value `{}`", v.trim())))?;
            if seen[sf.index()] {
                return Err(syntax(format!("{sf} given twice")));
            }
            seen[sf.index()] = true;
            values[sf.index()] = dbm;
        }
        SensitivityTable::new(values)
    }
}

/// Free-space path loss in dB (`log` is base 10).
pub fn free_space_loss(d_km: f64, f_mhz: f64) -> Result<f64, LinkBudgetError> {
    if !(d_km > 0.0 && d_km.is_finite()) {
        return Err(LinkBudgetError::Distance(d_km));
    }
    if !(f_mhz > 0.0 && f_mhz.is_finite()) {
        return Err(LinkBudgetError::Frequency(f_mhz));
    }
    Ok(32.45 + 20.0 * f_mhz.log10() + 20.0 * d_km.log10())
}

/// Below this ν the approximation is not valid and no loss is applied.
pub const NU_VALIDITY_BOUND: f64 = -0.78;

/// Which closed form to use for single knife-edge loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnifeEdgeFormula {
    /// `6.9 + 20 log(sqrt((ν-1)^2 + 1) + ν - 0.1)`.
    #[default]
    Printed,
    /// ITU-R P.526: `6.9 + 20 log(sqrt((ν-0.1)^2 + 1) + ν - 0.1)`.
    ItuP526,
}

/// Knife-edge diffraction loss in dB using the default formula.
pub fn knife_edge_loss(nu: f64) -> f64 {
    knife_edge_loss_with(nu, KnifeEdgeFormula::Printed)
}

pub fn knife_edge_loss_with(nu: f64, formula: KnifeEdgeFormula) -> f64 {
    if nu <= NU_VALIDITY_BOUND {
        return 0.0;
    }
    let centre = match formula {
        KnifeEdgeFormula::Printed => 1.0,
        KnifeEdgeFormula::ItuP526 => 0.1,
    };
    6.9 + 20.0 * (((nu - centre).powi(2) + 1.0).sqrt() + nu - 0.1).log10()
}

/// `erp - FSL(d, f) - extra`, receive antenna gain taken as 0 dBi.
pub fn received_power(cfg: &RadioConfig, d_km: f64, extra_loss_db: f64) -> Result<f64, LinkBudgetError> {
    cfg.validate()?;
    if !(extra_loss_db >= 0.0 && extra_loss_db.is_finite()) {
        return Err(LinkBudgetError::ExtraLoss(extra_loss_db));
    }
    Ok(cfg.erp_dbm - free_space_loss(d_km, cfg.frequency_mhz)? - extra_loss_db)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Receivability {
    pub receivable: bool,
    pub margin_db: f64,
}

pub fn is_receivable(p_dbm: f64, sf: SpreadingFactor, table: &SensitivityTable) -> Receivability {
    let margin_db = p_dbm - table.get(sf);
    Receivability {
        receivable: margin_db >= 0.0,
        margin_db,
    }
}
