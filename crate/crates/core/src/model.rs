//! Game specification: piecewise-linear running costs, slope sectors and
//! regime classification.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Which of the two players a quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Player {
    One,
    Two,
}

impl Player {
    pub const BOTH: [Player; 2] = [Player::One, Player::Two];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Player::One => 0,
            Player::Two => 1,
        }
    }

    #[inline]
    pub fn other(self) -> Player {
        match self {
            Player::One => Player::Two,
            Player::Two => Player::One,
        }
    }

    pub fn from_number(n: u8) -> Option<Player> {
        match n {
            1 => Some(Player::One),
            2 => Some(Player::Two),
            _ => None,
        }
    }
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index() + 1)
    }
}

/// Unvalidated cost description, as it appears in a JSON config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct RawCostSpec<T = f64> {
    pub breakpoints: Vec<T>,
    pub slopes: Vec<[T; 2]>,
    #[serde(default = "zero_offsets")]
    pub offsets: [T; 2],
}

fn zero_offsets<T: Real>() -> [T; 2] {
    [T::zero(), T::zero()]
}

impl<T: Real> RawCostSpec<T> {
    pub fn new(breakpoints: Vec<T>, slopes: Vec<[T; 2]>, offsets: [T; 2]) -> Self {
        RawCostSpec {
            breakpoints,
            slopes,
            offsets,
        }
    }
}

impl RawCostSpec<f64> {
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Validated piecewise-linear costs `h_1`, `h_2`.
///
/// `h_i` has slope `slopes[j][i]` on the j-th interval `]x_j, x_{j+1}[`
/// (with `x_0 = -inf`, `x_{N+1} = +inf`) and value `offsets[i]` at `x = 0`.
/// Values are reconstructed by integrating the slopes from `x = 0`, so the
/// costs are continuous by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec<T = f64> {
    breakpoints: Vec<T>,
    slopes: Vec<[T; 2]>,
    offsets: [T; 2],
    // (anchor x, anchor value) per interval, the anchor being the point of
    // the closed interval nearest to 0.
    anchors: Vec<(T, [T; 2])>,
}

/// Checks every invariant of a raw spec and precomputes the cost anchors.
pub fn validate_spec<T: Real>(raw: RawCostSpec<T>) -> Result<CostSpec<T>> {
    let RawCostSpec {
        breakpoints,
        slopes,
        offsets,
    } = raw;
    if breakpoints.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFiniteEntry {
            field: "breakpoints",
        });
    }
    if slopes.iter().flatten().any(|k| !k.is_finite()) {
        return Err(Error::NonFiniteEntry { field: "slopes" });
    }
    if offsets.iter().any(|o| !o.is_finite()) {
        return Err(Error::NonFiniteEntry { field: "offsets" });
    }
    if let Some(i) = breakpoints.windows(2).position(|w| w[0] >= w[1]) {
        return Err(Error::NonIncreasingBreakpoints { index: i + 1 });
    }
    if slopes.len() != breakpoints.len() + 1 {
        return Err(Error::SlopeCountMismatch {
            expected: breakpoints.len() + 1,
            breakpoints: breakpoints.len(),
            got: slopes.len(),
        });
    }
    if let Some(index) = slopes
        .iter()
        .position(|k| k[0] == T::zero() && k[1] == T::zero())
    {
        return Err(Error::ZeroSlopePair { index });
    }

    let n = slopes.len();
    let zero = T::zero();
    // interval containing 0 (0 on a breakpoint belongs to the right interval)
    let home = breakpoints.iter().take_while(|&&b| b <= zero).count();
    let mut anchors = vec![(zero, offsets); n];
    for j in home + 1..n {
        let (xa, ha) = anchors[j - 1];
        let xb = breakpoints[j - 1];
        let k = slopes[j - 1];
        anchors[j] = (xb, [ha[0] + k[0] * (xb - xa), ha[1] + k[1] * (xb - xa)]);
    }
    for j in (0..home).rev() {
        let (xa, ha) = anchors[j + 1];
        let xb = breakpoints[j];
        let k = slopes[j + 1];
        anchors[j] = (xb, [ha[0] + k[0] * (xb - xa), ha[1] + k[1] * (xb - xa)]);
    }

    Ok(CostSpec {
        breakpoints,
        slopes,
        offsets,
        anchors,
    })
}

impl<T: Real> CostSpec<T> {
    pub fn new(breakpoints: Vec<T>, slopes: Vec<[T; 2]>, offsets: [T; 2]) -> Result<Self> {
        validate_spec(RawCostSpec::new(breakpoints, slopes, offsets))
    }

    /// Single interval, linear costs through the origin.
    pub fn linear(k: [T; 2]) -> Result<Self> {
        Self::new(vec![], vec![k], [T::zero(), T::zero()])
    }

    pub fn breakpoints(&self) -> &[T] {
        &self.breakpoints
    }

    pub fn slopes(&self) -> &[[T; 2]] {
        &self.slopes
    }

    pub fn offsets(&self) -> [T; 2] {
        self.offsets
    }

    pub fn n_breakpoints(&self) -> usize {
        self.breakpoints.len()
    }

    /// Index j of the interval containing x; breakpoints belong to the
    /// interval on their right.
    pub fn interval_of(&self, x: T) -> usize {
        self.breakpoints.partition_point(|&b| b <= x)
    }

    pub fn slopes_at(&self, x: T) -> [T; 2] {
        self.slopes[self.interval_of(x)]
    }

    /// `h_i(x)`.
    pub fn eval_cost(&self, player: Player, x: T) -> T {
        let j = self.interval_of(x);
        let (xa, ha) = self.anchors[j];
        let i = player.index();
        ha[i] + self.slopes[j][i] * (x - xa)
    }

    pub fn eval_costs(&self, x: T) -> [T; 2] {
        [
            self.eval_cost(Player::One, x),
            self.eval_cost(Player::Two, x),
        ]
    }

    /// Global Lipschitz constant of `h_i`.
    pub fn lipschitz(&self, player: Player) -> T {
        let i = player.index();
        self.slopes
            .iter()
            .fold(T::zero(), |m, k| m.max(k[i].abs()))
    }

    /// Mirror image `x -> -x`: the costs `h_i(-x)`.
    pub fn reflected(&self) -> CostSpec<T> {
        let breakpoints = self.breakpoints.iter().rev().map(|&b| -b).collect();
        let slopes = self.slopes.iter().rev().map(|k| [-k[0], -k[1]]).collect();
        CostSpec::new(breakpoints, slopes, self.offsets).expect("reflection preserves validity")
    }

    /// Same slopes, breakpoints translated by `shift`. Offsets still pin x=0.
    pub fn translated(&self, shift: T) -> CostSpec<T> {
        let breakpoints = self.breakpoints.iter().map(|&b| b + shift).collect();
        CostSpec::new(breakpoints, self.slopes.clone(), self.offsets)
            .expect("translation preserves validity")
    }

    pub fn to_raw(&self) -> RawCostSpec<T> {
        RawCostSpec::new(self.breakpoints.clone(), self.slopes.clone(), self.offsets)
    }
}

impl CostSpec<f64> {
    pub fn from_json(text: &str) -> std::result::Result<Self, ConfigError> {
        let raw = RawCostSpec::from_json(text)?;
        Ok(validate_spec(raw)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_raw()).expect("plain numbers serialize")
    }
}

/// Failure to ingest a config document.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config validation error: {0}")]
    Invalid(#[from] Error),
}

/// Open angular cone `](i-1)pi/4, i pi/4[` of the slope plane, or a point on
/// an axis/diagonal (or the origin).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sector {
    Open(u8),
    Boundary,
}

impl Sector {
    pub fn index(self) -> Option<u8> {
        match self {
            Sector::Open(i) => Some(i),
            Sector::Boundary => None,
        }
    }

    fn is_in(self, set: &[u8]) -> bool {
        matches!(self, Sector::Open(i) if set.contains(&i))
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sector::Open(i) => write!(f, "A{i}"),
            Sector::Boundary => write!(f, "boundary"),
        }
    }
}

/// Angular distance below which a point counts as lying on a sector boundary.
pub const SECTOR_BOUNDARY_TOL: f64 = 1e-12;

pub fn classify_sector<T: Real>(point: [T; 2]) -> Sector {
    if point[0] == T::zero() && point[1] == T::zero() {
        return Sector::Boundary;
    }
    let quarter = T::FRAC_PI_4();
    let mut theta = point[1].atan2(point[0]);
    if theta < T::zero() {
        theta = theta + T::TAU();
    }
    let scaled = theta / quarter;
    let nearest = scaled.round();
    if ((scaled - nearest) * quarter).abs() <= T::lit(SECTOR_BOUNDARY_TOL) {
        return Sector::Boundary;
    }
    let i = scaled.floor().to_u8().unwrap_or(0) + 1;
    Sector::Open(i.clamp(1, 8))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    CooperativeUnique,
    ConflictingMany,
    ConflictingNone,
    MixedMany,
    Periodic,
    UnsupportedBoundary,
    UnsupportedCombination,
}

impl Regime {
    pub fn headline(self) -> &'static str {
        match self {
            Regime::CooperativeUnique => "unique admissible solution (cooperative costs)",
            Regime::ConflictingMany => "infinitely many admissible solutions expected",
            Regime::ConflictingNone => "no admissible solution exists",
            Regime::MixedMany => "infinitely many admissible solutions expected (mixed costs)",
            Regime::Periodic => "periodic admissible solution on periodic costs",
            Regime::UnsupportedBoundary => "a slope pair lies on a sector boundary",
            Regime::UnsupportedCombination => "sector combination not covered by the theory",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub per_interval_sectors: Vec<Sector>,
    pub regime: Regime,
    pub notes: String,
}

const COOP_POS: [u8; 2] = [1, 2];
const COOP_NEG: [u8; 2] = [5, 6];

pub fn classify_regime<T: Real>(spec: &CostSpec<T>) -> RegimeReport {
    let sectors: Vec<Sector> = spec.slopes().iter().map(|&k| classify_sector(k)).collect();
    let (regime, notes) = regime_of(&sectors, spec.slopes());
    RegimeReport {
        per_interval_sectors: sectors,
        regime,
        notes,
    }
}

fn regime_of<T: Real>(sectors: &[Sector], slopes: &[[T; 2]]) -> (Regime, String) {
    if let Some(j) = sectors.iter().position(|s| *s == Sector::Boundary) {
        return (
            Regime::UnsupportedBoundary,
            format!("slope pair {j} lies on an axis or diagonal; the sector theory needs open sectors"),
        );
    }
    if sectors.iter().all(|s| s.is_in(&COOP_POS)) {
        return (
            Regime::CooperativeUnique,
            "all slope pairs in A1 u A2: both costs increase everywhere; unique admissible solution \
             obtained by gluing interval pieces left to right"
                .into(),
        );
    }
    if sectors.iter().all(|s| s.is_in(&COOP_NEG)) {
        return (
            Regime::CooperativeUnique,
            "all slope pairs in A5 u A6: both costs decrease everywhere; unique admissible solution \
             obtained by gluing interval pieces right to left"
                .into(),
        );
    }
    if sectors.len() != 2 {
        return (
            Regime::UnsupportedCombination,
            format!(
                "{} intervals with non-cooperative slopes; only single-breakpoint conflicting and \
                 mixed configurations are analyzed",
                sectors.len()
            ),
        );
    }
    let (s0, s1) = (sectors[0], sectors[1]);
    let pair = (s0.index().unwrap_or(0), s1.index().unwrap_or(0));
    match pair {
        // (7,8) and (8,7) are the player-swapped images of (4,3) and (3,4)
        (4, 3) | (7, 8) => (
            Regime::ConflictingMany,
            "conflicting interests with K0 in A4, K1 in A3 (or, players swapped, A7/A8): a \
             one-parameter family of admissible solutions through data on the anti-diagonal near \
             the origin"
                .into(),
        ),
        (3, 4) | (8, 7) => (
            Regime::ConflictingNone,
            "conflicting interests with K0 in A3, K1 in A4 (or, players swapped, A8/A7): every \
             bounded forward orbit has an unbounded backward continuation, so no admissible \
             solution exists"
                .into(),
        ),
        _ if s0.is_in(&COOP_NEG) && s1.is_in(&COOP_POS) => {
            let a0 = slopes[0][1] / slopes[0][0];
            let a1 = slopes[1][1] / slopes[1][0];
            if a0 != a1 {
                (
                    Regime::MixedMany,
                    "costs switch from decreasing to increasing at the breakpoint with distinct \
                     slope ratios: a family of admissible solutions parameterized by data in the \
                     cone between the two stable directions"
                        .into(),
                )
            } else {
                (
                    Regime::UnsupportedCombination,
                    "mixed configuration with equal slope ratios: K0 and K1 are collinear with the \
                     origin and the family cone is empty"
                        .into(),
                )
            }
        }
        _ => (
            Regime::UnsupportedCombination,
            format!("sector pair ({s0}, {s1}) is not covered by the theory"),
        ),
    }
}
