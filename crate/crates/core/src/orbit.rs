//! Orbits of the rescaled system: adaptive integration with stop events,
//! manifold shooting at the origin saddle, polyline intersection and
//! reconstruction of the physical coordinate `x`.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{dopri_step, Tolerance};
use crate::phase::{capital_delta, eigen_modulus, linearization, vector_field, PhaseState};
use crate::real::{dist2, norm2, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn sign<T: Real>(self) -> T {
        match self {
            Direction::Forward => T::one(),
            Direction::Backward => -T::one(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Termination<T = f64> {
    ReachedEquilibrium([T; 2]),
    ReachedOrigin,
    BlowUp { s: T },
    SpanExhausted,
    CrossedBreakpoint(T),
    StepBudgetExhausted,
}

impl<T: Real> Termination<T> {
    pub fn tag(&self) -> &'static str {
        match self {
            Termination::ReachedEquilibrium(_) => "reached_equilibrium",
            Termination::ReachedOrigin => "reached_origin",
            Termination::BlowUp { .. } => "blow_up",
            Termination::SpanExhausted => "span_exhausted",
            Termination::CrossedBreakpoint(_) => "crossed_breakpoint",
            Termination::StepBudgetExhausted => "step_budget_exhausted",
        }
    }

    pub fn is_blow_up(&self) -> bool {
        matches!(self, Termination::BlowUp { .. })
    }
}

impl<T: Real> fmt::Display for Termination<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::ReachedEquilibrium(k) => write!(f, "{}({},{})", self.tag(), k[0], k[1]),
            Termination::BlowUp { s } => write!(f, "{}(s={})", self.tag(), s),
            Termination::CrossedBreakpoint(x) => write!(f, "{}(x={})", self.tag(), x),
            _ => f.write_str(self.tag()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ManifoldTag {
    StableOfOrigin,
    UnstableOfOrigin,
    None,
}

/// Stop events and integrator settings for [`integrate`].
#[derive(Debug, Clone, PartialEq)]
pub struct StopConditions<T = f64> {
    /// Maximum `|s|` advance.
    pub s_span: T,
    pub blowup_radius: T,
    /// Entering this ball around the origin stops the orbit.
    pub origin_radius: T,
    /// Entering this ball around `K` stops the orbit (if enabled).
    pub equilibrium_radius: T,
    pub stop_at_equilibrium: bool,
    /// Physical coordinates at which to stop exactly.
    pub x_crossings: Vec<T>,
    /// Cap on the `x` advance per step, enforced while `|p| <= dense_radius`.
    pub max_dx: Option<T>,
    pub dense_radius: T,
    pub atol: T,
    pub rtol: T,
    pub h_init: T,
    pub h_min: T,
    pub max_steps: usize,
}

impl<T: Real> Default for StopConditions<T> {
    fn default() -> Self {
        StopConditions {
            s_span: T::lit(200.0),
            blowup_radius: T::lit(1e6),
            origin_radius: T::lit(1e-8),
            equilibrium_radius: T::lit(1e-8),
            stop_at_equilibrium: true,
            x_crossings: Vec::new(),
            max_dx: None,
            dense_radius: T::lit(50.0),
            atol: T::lit(1e-10),
            rtol: T::lit(1e-10),
            h_init: T::lit(1e-3),
            h_min: T::lit(1e-15),
            max_steps: 2_000_000,
        }
    }
}

impl<T: Real> StopConditions<T> {
    pub fn with_span(mut self, span: T) -> Self {
        self.s_span = span;
        self
    }

    pub fn with_max_dx(mut self, dx: T) -> Self {
        self.max_dx = Some(dx);
        self
    }

    pub fn with_crossing(mut self, x: T) -> Self {
        self.x_crossings.push(x);
        self
    }

    pub fn with_tolerance(mut self, atol: T, rtol: T) -> Self {
        self.atol = atol;
        self.rtol = rtol;
        self
    }

    fn validate(&self) -> Result<()> {
        let pos = |v: T| v.is_finite() && v > T::zero();
        let msg = if !pos(self.s_span) {
            "s_span must be positive and finite"
        } else if !pos(self.blowup_radius) || !pos(self.origin_radius) || !pos(self.equilibrium_radius) {
            "radii must be positive"
        } else if self.blowup_radius <= self.origin_radius {
            "blow-up radius must exceed the origin radius"
        } else if !pos(self.atol) || !pos(self.rtol) {
            "tolerances must be positive"
        } else if !pos(self.h_init) || !(self.h_min >= T::zero()) {
            "invalid step sizes"
        } else if self.max_dx.is_some_and(|d| !pos(d)) {
            "max_dx must be positive"
        } else if self.x_crossings.iter().any(|x| !x.is_finite()) {
            "crossings must be finite"
        } else {
            return Ok(());
        };
        Err(Error::InvalidStopConditions(msg.into()))
    }
}

/// Sampled trajectory of the rescaled system.
///
/// Samples are always stored in increasing `s`. For backward integrations
/// the point where integration stopped (described by `termination`) is
/// therefore the *first* sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Orbit<T = f64> {
    pub samples: Vec<PhaseState<T>>,
    pub termination: Termination<T>,
    pub manifold_tag: ManifoldTag,
    pub direction: Direction,
    /// Interval slopes driving the dynamics; `None` for synthetic polylines.
    pub slopes: Option<[T; 2]>,
    /// Finite `x` limit at the end of the orbit attached to the origin.
    pub origin_limit_x: Option<T>,
}

impl<T: Real> Orbit<T> {
    /// Synthetic orbit through the given points (no dynamics attached).
    pub fn from_points(points: &[[T; 2]]) -> Self {
        let samples = points
            .iter()
            .enumerate()
            .map(|(i, &p)| PhaseState {
                p,
                s: T::from_usize(i).unwrap(),
                x: T::from_usize(i).unwrap(),
            })
            .collect();
        Orbit {
            samples,
            termination: Termination::SpanExhausted,
            manifold_tag: ManifoldTag::None,
            direction: Direction::Forward,
            slopes: None,
            origin_limit_x: None,
        }
    }

    pub fn first(&self) -> &PhaseState<T> {
        &self.samples[0]
    }

    pub fn last(&self) -> &PhaseState<T> {
        self.samples.last().expect("orbits have at least one sample")
    }

    /// Sample at which integration stopped.
    pub fn stop_sample(&self) -> &PhaseState<T> {
        match self.direction {
            Direction::Forward => self.last(),
            Direction::Backward => self.first(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn reached_equilibrium(&self) -> bool {
        matches!(self.termination, Termination::ReachedEquilibrium(_))
    }

    /// Largest `|p|` along the orbit.
    pub fn max_norm(&self) -> T {
        self.samples.iter().fold(T::zero(), |m, st| m.max(norm2(st.p)))
    }

    /// Keeps samples `[from, to]` and appends/prepends nothing.
    pub fn slice(&self, from: usize, to: usize) -> Orbit<T> {
        Orbit {
            samples: self.samples[from..=to].to_vec(),
            ..self.clone()
        }
    }

    /// Writes `s,p1,p2,x,delta` rows followed by a termination comment.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "s,p1,p2,x,delta")?;
        for st in &self.samples {
            writeln!(
                w,
                "{},{},{},{},{}",
                st.s,
                st.p[0],
                st.p[1],
                st.x,
                capital_delta(st.p)
            )?;
        }
        writeln!(w, "# termination={}", self.termination.tag())
    }
}

fn rhs<T: Real>(k: [T; 2], sign: T) -> impl Fn(T, &[T; 3]) -> [T; 3] {
    move |_s, y| {
        let p = [y[0], y[1]];
        let f = vector_field(p, k);
        [f[0] * sign, f[1] * sign, capital_delta(p) * sign]
    }
}

/// Integrates `(dp/ds, dx/ds) = (F_K(p), Delta(p))` from `p0` at `s = 0`, `x = 0`.
pub fn integrate<T: Real>(
    p0: [T; 2],
    k: [T; 2],
    direction: Direction,
    stop: &StopConditions<T>,
) -> Result<Orbit<T>> {
    integrate_from(p0, T::zero(), k, direction, stop)
}

/// As [`integrate`], with the physical coordinate starting at `x0`.
pub fn integrate_from<T: Real>(
    p0: [T; 2],
    x0: T,
    k: [T; 2],
    direction: Direction,
    stop: &StopConditions<T>,
) -> Result<Orbit<T>> {
    stop.validate()?;
    if !(p0[0].is_finite() && p0[1].is_finite() && x0.is_finite()) {
        return Err(Error::NonFiniteEntry { field: "initial point" });
    }
    // time reversal: integrate dy/dtau = -F with tau = -s
    let sign: T = direction.sign();
    let f = rhs(k, sign);
    let tol = Tolerance::new(stop.atol, stop.rtol);

    let mut tau = T::zero();
    let mut y = [p0[0], p0[1], x0];
    let mut samples = vec![PhaseState { p: p0, s: T::zero(), x: x0 }];
    let mut in_origin = norm2(p0) <= stop.origin_radius;
    let mut in_eq = dist2(p0, k) <= stop.equilibrium_radius;
    let mut h = stop.h_init;
    let mut attempts = 0usize;

    let termination = loop {
        if tau >= stop.s_span {
            break Termination::SpanExhausted;
        }
        attempts += 1;
        if attempts > stop.max_steps {
            break Termination::StepBudgetExhausted;
        }
        let p = [y[0], y[1]];
        let mut h_try = h.min(stop.s_span - tau);
        if let Some(max_dx) = stop.max_dx {
            let d = capital_delta(p);
            if norm2(p) <= stop.dense_radius && d > T::zero() {
                h_try = h_try.min(max_dx / d);
            }
        }
        if h_try < stop.h_min {
            return Err(Error::StepSizeUnderflow {
                s: (sign * tau).to_f64_lossy(),
                p_norm: norm2(p).to_f64_lossy(),
            });
        }
        let step = dopri_step(&f, tau, &y, h_try, &tol);
        if !(step.err <= T::one()) {
            // also catches NaN from overflow inside the step
            h = if step.err.is_finite() {
                tol.next_step(h_try, step.err)
            } else {
                h_try * T::lit(0.1)
            };
            continue;
        }
        let mut y_new = step.y;
        let mut tau_new = tau + h_try;
        h = tol.next_step(h_try, step.err);

        // exact landing on the first requested x crossing inside this step
        let crossing = first_crossing(&stop.x_crossings, y[2], y_new[2]);
        if let Some(target) = crossing {
            let (hc, yc) = land_on_x(&f, &tol, tau, &y, h_try, target);
            y_new = yc;
            y_new[2] = target;
            tau_new = tau + hc;
        }

        tau = tau_new;
        y = y_new;
        let p = [y[0], y[1]];
        samples.push(PhaseState { p, s: sign * tau, x: y[2] });

        if let Some(target) = crossing {
            break Termination::CrossedBreakpoint(target);
        }
        let r = norm2(p);
        if !r.is_finite() || r >= stop.blowup_radius {
            break Termination::BlowUp { s: sign * tau };
        }
        let now_in_origin = r <= stop.origin_radius;
        if now_in_origin && !in_origin {
            break Termination::ReachedOrigin;
        }
        in_origin = now_in_origin;
        let now_in_eq = dist2(p, k) <= stop.equilibrium_radius;
        if stop.stop_at_equilibrium && now_in_eq && !in_eq {
            break Termination::ReachedEquilibrium(k);
        }
        in_eq = now_in_eq;
    };

    if direction == Direction::Backward {
        samples.reverse();
    }
    let mut orbit = Orbit {
        samples,
        termination,
        manifold_tag: ManifoldTag::None,
        direction,
        slopes: Some(k),
        origin_limit_x: None,
    };
    if termination == Termination::ReachedOrigin {
        let at_end = direction == Direction::Forward;
        let tail = origin_tail(&orbit.samples, at_end, T::lit(2.0) * eigen_modulus(k));
        orbit.origin_limit_x = Some(if at_end {
            orbit.last().x + tail
        } else {
            orbit.first().x - tail
        });
    }
    Ok(orbit)
}

fn first_crossing<T: Real>(targets: &[T], x_old: T, x_new: T) -> Option<T> {
    let (lo, hi) = if x_new >= x_old { (x_old, x_new) } else { (x_new, x_old) };
    targets
        .iter()
        .copied()
        .filter(|&t| t != x_old && t >= lo && t <= hi)
        .min_by(|a, b| {
            (*a - x_old)
                .abs()
                .partial_cmp(&(*b - x_old).abs())
                .unwrap()
        })
}

/// Secant search for the sub-step that lands `x` on `target`.
fn land_on_x<T: Real, F>(f: &F, tol: &Tolerance<T>, tau: T, y: &[T; 3], h: T, target: T) -> (T, [T; 3])
where
    F: Fn(T, &[T; 3]) -> [T; 3],
{
    let (mut a, mut ga) = (T::zero(), y[2] - target);
    let full = dopri_step(f, tau, y, h, tol).y;
    let (mut b, mut gb) = (h, full[2] - target);
    let mut best = (b, full);
    let scale = T::one().max(target.abs());
    for _ in 0..60 {
        if gb.abs() <= T::lit(1e-14) * scale || gb == ga {
            break;
        }
        let mut c = b - gb * (b - a) / (gb - ga);
        if !(c > T::zero() && c <= h) {
            c = (a + b) * T::lit(0.5);
        }
        let yc = dopri_step(f, tau, y, c, tol).y;
        let gc = yc[2] - target;
        best = (c, yc);
        if gc.abs() <= T::lit(1e-14) * scale {
            break;
        }
        // keep a bracket when possible
        if (gc < T::zero()) == (ga < T::zero()) {
            a = c;
            ga = gc;
        } else {
            b = c;
            gb = gc;
        }
    }
    best
}

/// Distance in `x` between the origin-side end of an orbit and the limit
/// point `x_o`, from the exponential decay of `Delta` over the last decade of
/// `|p|` at that end.
pub fn origin_tail<T: Real>(samples: &[PhaseState<T>], at_end: bool, fallback_rate: T) -> T {
    let ordered: Vec<&PhaseState<T>> = if at_end {
        samples.iter().rev().collect()
    } else {
        samples.iter().collect()
    };
    let Some(end) = ordered.first() else {
        return T::zero();
    };
    let r_end = norm2(end.p);
    let d_end = capital_delta(end.p);
    let decade: Vec<&&PhaseState<T>> = ordered
        .iter()
        .take_while(|st| norm2(st.p) <= T::lit(10.0) * r_end)
        .take(64)
        .collect();
    let mut rate = fallback_rate;
    if decade.len() >= 3 {
        let n = T::from_usize(decade.len()).unwrap();
        let (mut ss, mut ls, mut sss, mut sls) = (T::zero(), T::zero(), T::zero(), T::zero());
        for st in &decade {
            let l = capital_delta(st.p).ln();
            ss = ss + st.s;
            ls = ls + l;
            sss = sss + st.s * st.s;
            sls = sls + st.s * l;
        }
        let denom = n * sss - ss * ss;
        if denom > T::zero() {
            let slope = (n * sls - ss * ls) / denom;
            if slope.is_finite() && slope.abs() > T::lit(1e-6) {
                rate = slope.abs();
            }
        }
    }
    d_end / rate
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Plus, Side::Minus];

    fn sign<T: Real>(self) -> T {
        match self {
            Side::Plus => T::one(),
            Side::Minus => -T::one(),
        }
    }
}

/// Manifold offset and stop settings for shooting.
#[derive(Debug, Clone, PartialEq)]
pub struct ShootOptions<T = f64> {
    /// The start point sits at distance `epsilon_scale * lambda_plus` from
    /// the origin along the eigendirection.
    pub epsilon_scale: T,
    pub stop: StopConditions<T>,
}

impl<T: Real> Default for ShootOptions<T> {
    fn default() -> Self {
        ShootOptions {
            epsilon_scale: T::lit(1e-6),
            stop: StopConditions::default().with_span(T::lit(60.0)),
        }
    }
}

/// Branch of the unstable manifold of the origin, integrated forward from
/// `+-eps v_plus`.
pub fn shoot_unstable<T: Real>(k: [T; 2], side: Side) -> Result<Orbit<T>> {
    shoot_unstable_with(k, side, &ShootOptions::default())
}

pub fn shoot_unstable_with<T: Real>(k: [T; 2], side: Side, opts: &ShootOptions<T>) -> Result<Orbit<T>> {
    let (_, eig) = linearization(k)?;
    let eps = opts.epsilon_scale * eig.lambda_plus;
    let v = eig.unit_v_plus();
    let sg: T = side.sign();
    let p0 = [sg * eps * v[0], sg * eps * v[1]];
    let mut orbit = integrate(p0, k, Direction::Forward, &opts.stop)?;
    orbit.manifold_tag = ManifoldTag::UnstableOfOrigin;
    let tail = origin_tail(&orbit.samples, false, T::lit(2.0) * eig.lambda_plus);
    orbit.origin_limit_x = Some(orbit.first().x - tail);
    Ok(orbit)
}

/// Branch of the stable manifold of the origin: integrated backward from
/// `+-eps v_minus`, so that read in increasing `s` it approaches the origin.
pub fn shoot_stable<T: Real>(k: [T; 2], side: Side) -> Result<Orbit<T>> {
    shoot_stable_with(k, side, &ShootOptions::default())
}

pub fn shoot_stable_with<T: Real>(k: [T; 2], side: Side, opts: &ShootOptions<T>) -> Result<Orbit<T>> {
    let (_, eig) = linearization(k)?;
    let eps = opts.epsilon_scale * eig.lambda_plus;
    let v = eig.unit_v_minus();
    let sg: T = side.sign();
    let p0 = [sg * eps * v[0], sg * eps * v[1]];
    let mut orbit = integrate(p0, k, Direction::Backward, &opts.stop)?;
    orbit.manifold_tag = ManifoldTag::StableOfOrigin;
    let tail = origin_tail(&orbit.samples, true, T::lit(2.0) * eig.lambda_plus);
    orbit.origin_limit_x = Some(orbit.last().x + tail);
    Ok(orbit)
}

/// Shifts `x` so that `samples[anchor_index].x == anchor_x`.
pub fn reconstruct_x<T: Real>(orbit: &Orbit<T>, anchor_x: T, anchor_index: usize) -> Result<Orbit<T>> {
    let Some(anchor) = orbit.samples.get(anchor_index) else {
        return Err(Error::AnchorOutOfRange {
            index: anchor_index,
            len: orbit.samples.len(),
        });
    };
    let shift = anchor_x - anchor.x;
    let mut out = orbit.clone();
    for st in &mut out.samples {
        st.x = st.x + shift;
    }
    out.samples[anchor_index].x = anchor_x;
    out.origin_limit_x = out.origin_limit_x.map(|x| x + shift);
    Ok(out)
}

/// Crossing of two orbit polylines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing<T = f64> {
    pub point: [T; 2],
    /// Segment index and parameter in `[0, 1]` on each orbit.
    pub a_segment: usize,
    pub a_t: T,
    pub b_segment: usize,
    pub b_t: T,
}

/// Point where the two polylines cross, refined onto the true orbits when
/// both carry dynamics. Among several crossings the one nearest the origin
/// is returned.
pub fn find_intersection<T: Real>(a: &Orbit<T>, b: &Orbit<T>) -> Option<[T; 2]> {
    find_crossing(a, b, T::zero()).map(|c| c.point)
}

/// As [`find_intersection`], ignoring crossings within `min_radius` of the origin.
pub fn find_crossing<T: Real>(a: &Orbit<T>, b: &Orbit<T>, min_radius: T) -> Option<Crossing<T>> {
    const CHUNK: usize = 32;
    let pa: Vec<[T; 2]> = a.samples.iter().map(|s| s.p).collect();
    let pb: Vec<[T; 2]> = b.samples.iter().map(|s| s.p).collect();
    if pa.len() < 2 || pb.len() < 2 {
        return None;
    }
    let boxes_a = chunk_boxes(&pa, CHUNK);
    let boxes_b = chunk_boxes(&pb, CHUNK);
    let mut best: Option<Crossing<T>> = None;
    for (ia, ba) in boxes_a.iter().enumerate() {
        for (ib, bb) in boxes_b.iter().enumerate() {
            if !boxes_overlap(ba, bb) {
                continue;
            }
            let ra = ia * CHUNK..((ia + 1) * CHUNK).min(pa.len() - 1);
            let rb = ib * CHUNK..((ib + 1) * CHUNK).min(pb.len() - 1);
            for i in ra.clone() {
                for j in rb.clone() {
                    if let Some((t, u)) = segment_crossing(pa[i], pa[i + 1], pb[j], pb[j + 1]) {
                        let point = lerp(pa[i], pa[i + 1], t);
                        if norm2(point) < min_radius {
                            continue;
                        }
                        let c = Crossing { point, a_segment: i, a_t: t, b_segment: j, b_t: u };
                        if best.is_none_or(|bc| norm2(point) < norm2(bc.point)) {
                            best = Some(c);
                        }
                    }
                }
            }
        }
    }
    best.map(|c| refine_crossing(a, b, c))
}

type Bbox<T> = ([T; 2], [T; 2]);

fn chunk_boxes<T: Real>(pts: &[[T; 2]], chunk: usize) -> Vec<Bbox<T>> {
    let nseg = pts.len() - 1;
    (0..nseg.div_ceil(chunk))
        .map(|c| {
            let lo = c * chunk;
            let hi = ((c + 1) * chunk).min(nseg);
            let mut mn = pts[lo];
            let mut mx = pts[lo];
            for p in &pts[lo..=hi] {
                for d in 0..2 {
                    mn[d] = mn[d].min(p[d]);
                    mx[d] = mx[d].max(p[d]);
                }
            }
            (mn, mx)
        })
        .collect()
}

fn boxes_overlap<T: Real>(a: &Bbox<T>, b: &Bbox<T>) -> bool {
    (0..2).all(|d| a.0[d] <= b.1[d] && b.0[d] <= a.1[d])
}

fn lerp<T: Real>(a: [T; 2], b: [T; 2], t: T) -> [T; 2] {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

fn cross<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    a[0] * b[1] - a[1] * b[0]
}

/// Parameters `(t, u)` of the proper crossing of segments `a0a1` and `b0b1`.
pub fn segment_crossing<T: Real>(a0: [T; 2], a1: [T; 2], b0: [T; 2], b1: [T; 2]) -> Option<(T, T)> {
    let r = [a1[0] - a0[0], a1[1] - a0[1]];
    let s = [b1[0] - b0[0], b1[1] - b0[1]];
    let denom = cross(r, s);
    if denom == T::zero() {
        return None;
    }
    let q = [b0[0] - a0[0], b0[1] - a0[1]];
    let t = cross(q, s) / denom;
    let u = cross(q, r) / denom;
    let (zero, one) = (T::zero(), T::one());
    (t >= zero && t <= one && u >= zero && u <= one).then_some((t, u))
}

/// Damped Newton on the segment parameters, evaluating each orbit by a
/// partial integration step from the segment's first sample.
fn refine_crossing<T: Real>(a: &Orbit<T>, b: &Orbit<T>, c: Crossing<T>) -> Crossing<T> {
    let (Some(ka), Some(kb)) = (a.slopes, b.slopes) else {
        return c;
    };
    let tol = Tolerance::new(T::lit(1e-13), T::lit(1e-13));
    let seg_point = |o: &Orbit<T>, k: [T; 2], i: usize, t: T| -> ([T; 2], [T; 2]) {
        let s0 = &o.samples[i];
        let h = (o.samples[i + 1].s - s0.s) * t;
        let f = rhs(k, T::one());
        let y0 = [s0.p[0], s0.p[1], s0.x];
        let y = if h == T::zero() { y0 } else { dopri_step(&f, s0.s, &y0, h, &tol).y };
        let p = [y[0], y[1]];
        let v = vector_field(p, k);
        let span = o.samples[i + 1].s - s0.s;
        (p, [v[0] * span, v[1] * span])
    };
    let (mut t, mut u) = (c.a_t, c.b_t);
    let (mut pa, mut da) = seg_point(a, ka, c.a_segment, t);
    let (mut pb, mut db) = seg_point(b, kb, c.b_segment, u);
    let mut res = dist2(pa, pb);
    for _ in 0..50 {
        if res <= T::lit(1e-13) {
            break;
        }
        // solve da*dt - db*du = pb - pa
        let rhs_v = [pb[0] - pa[0], pb[1] - pa[1]];
        let det = cross(da, [-db[0], -db[1]]);
        if det == T::zero() {
            break;
        }
        let dt = cross(rhs_v, [-db[0], -db[1]]) / det;
        let du = cross(da, rhs_v) / det;
        let mut lam = T::one();
        let mut improved = false;
        for _ in 0..30 {
            let nt = (t + lam * dt).max(T::zero()).min(T::one());
            let nu = (u + lam * du).max(T::zero()).min(T::one());
            let (qa, ea) = seg_point(a, ka, c.a_segment, nt);
            let (qb, eb) = seg_point(b, kb, c.b_segment, nu);
            let r = dist2(qa, qb);
            if r < res {
                (t, u, pa, da, pb, db, res) = (nt, nu, qa, ea, qb, eb, r);
                improved = true;
                break;
            }
            lam = lam * T::lit(0.5);
        }
        if !improved {
            break;
        }
    }
    Crossing {
        point: [(pa[0] + pb[0]) * T::lit(0.5), (pa[1] + pb[1]) * T::lit(0.5)],
        a_segment: c.a_segment,
        a_t: t,
        b_segment: c.b_segment,
        b_t: u,
    }
}

/// State of an orbit at parameter `t` of segment `i`, by a partial
/// integration step (linear interpolation for synthetic orbits).
pub fn point_on_segment<T: Real>(o: &Orbit<T>, i: usize, t: T) -> PhaseState<T> {
    let s0 = o.samples[i];
    let s1 = o.samples[i + 1];
    match o.slopes {
        Some(k) => {
            let tol = Tolerance::new(T::lit(1e-13), T::lit(1e-13));
            let h = (s1.s - s0.s) * t;
            let y0 = [s0.p[0], s0.p[1], s0.x];
            let y = if h == T::zero() {
                y0
            } else {
                dopri_step(&rhs(k, T::one()), s0.s, &y0, h, &tol).y
            };
            PhaseState { p: [y[0], y[1]], s: s0.s + h, x: y[2] }
        }
        None => PhaseState {
            p: lerp(s0.p, s1.p, t),
            s: s0.s + (s1.s - s0.s) * t,
            x: s0.x + (s1.x - s0.x) * t,
        },
    }
}
