//! Control protocol shapes `g(t)` and their optimization parameter vectors.
//!
//! Every shape evaluates with a pointwise clamp to `[-g_max, g_max]`, so an
//! optimizer can never produce a protocol that violates the energy bound.
//! Bang shapes additionally carry box bounds that make the clamp a no-op.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::SplitMix64;

/// Box bound on CRAB modulation coefficients. The clamp on `g(t)` guarantees
/// the energy constraint regardless; a finite box keeps the derivative-free
/// search well-scaled.
pub const CRAB_COEFF_MAX: f64 = 5.0;

/// Randomized CRAB frequencies `w_n = 2 pi n w0 (1 + xi_n)`, reconstructible
/// from the seed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrabFrequencies<S: Real> {
    pub omega0: S,
    pub xi: Vec<S>,
    pub seed: u64,
}

impl<S: Real> CrabFrequencies<S> {
    /// Draws `nc` detunings `xi_n` uniformly from `[-1/2, 1/2]`.
    pub fn draw(omega0: S, nc: usize, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let xi = (0..nc)
            .map(|_| rng.next_range(S::of(-0.5), S::of(0.5)))
            .collect();
        Self { omega0, xi, seed }
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    /// `w_n` for n = 1..=Nc.
    pub fn frequencies(&self) -> Vec<S> {
        self.xi
            .iter()
            .enumerate()
            .map(|(i, &xi)| S::of(2.0) * S::PI() * S::of((i + 1) as f64) * self.omega0 * (S::one() + xi))
            .collect()
    }
}

/// CRAB modulation data shared by the fixed- and free-endpoint variants.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrabShape<S: Real> {
    pub g0: S,
    pub g1: S,
    pub freqs: CrabFrequencies<S>,
    pub x: Vec<S>,
    pub y: Vec<S>,
    /// Envelope constant `c` in `b(t) = c t (t - tau)`.
    pub envelope_c: S,
}

impl<S: Real> CrabShape<S> {
    fn modulated(&self, start: S, end: S, t: S, tau: S) -> S {
        let ramp = start + (end - start) * t / tau;
        let envelope = self.envelope_c * t * (t - tau);
        let mut series = S::zero();
        for ((&xn, &yn), w) in self.x.iter().zip(self.y.iter()).zip(self.freqs.frequencies()) {
            series += xn * (w * t).cos() + yn * (w * t).sin();
        }
        ramp * (S::one() + envelope * series)
    }
}

/// Protocol shape, a map `t -> g(t)` over `[0, tau]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Shape<S: Real> {
    Constant {
        g: S,
    },
    LinearRamp {
        g0: S,
        g1: S,
    },
    /// Piecewise-constant with `values.len()` bangs; `switch_times` are the
    /// interior switching instants (t_1 = 0 and t_{l+1} = tau are fixed).
    BangBang {
        values: Vec<S>,
        switch_times: Vec<S>,
    },
    DoubleBang {
        g_a: S,
        g_b: S,
        t_b: S,
    },
    /// `+g_max` until `t1`, then `-g_max`; only the switch time varies.
    SaturatedDoubleBang {
        t1: S,
    },
    Crab(CrabShape<S>),
    FreeEndpointCrab {
        crab: CrabShape<S>,
        g_start: S,
        g_end: S,
    },
}

/// A protocol: shape plus total duration and energy bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Protocol<S: Real> {
    pub shape: Shape<S>,
    pub tau: S,
    pub g_max: S,
}

impl<S: Real> Protocol<S> {
    pub fn constant(g: S, tau: S, g_max: S) -> Self {
        Self {
            shape: Shape::Constant { g },
            tau,
            g_max,
        }
    }

    pub fn linear_ramp(g0: S, g1: S, tau: S, g_max: S) -> Self {
        Self {
            shape: Shape::LinearRamp { g0, g1 },
            tau,
            g_max,
        }
    }

    pub fn double_bang(g_a: S, g_b: S, t_b: S, tau: S, g_max: S) -> Self {
        Self {
            shape: Shape::DoubleBang { g_a, g_b, t_b },
            tau,
            g_max,
        }
    }

    pub fn bang_bang(values: Vec<S>, mut switch_times: Vec<S>, tau: S, g_max: S) -> Result<Self> {
        if values.len() != switch_times.len() + 1 {
            return Err(Error::invalid(
                "switch_times",
                "an l-bang protocol needs l values and l-1 switch times",
            ));
        }
        switch_times.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN switch time"));
        Ok(Self {
            shape: Shape::BangBang {
                values,
                switch_times,
            },
            tau,
            g_max,
        })
    }

    pub fn saturated_double_bang(t1: S, tau: S, g_max: S) -> Self {
        Self {
            shape: Shape::SaturatedDoubleBang { t1 },
            tau,
            g_max,
        }
    }

    /// Short label of the protocol family, as used in scan records.
    pub fn family(&self) -> String {
        match &self.shape {
            Shape::Constant { .. } => "constant".into(),
            Shape::LinearRamp { .. } => "linear".into(),
            Shape::BangBang { values, .. } => format!("n-bang({})", values.len()),
            Shape::DoubleBang { .. } => "double-bang".into(),
            Shape::SaturatedDoubleBang { .. } => "saturated-db".into(),
            Shape::Crab(c) => format!("crab({})", c.freqs.len()),
            Shape::FreeEndpointCrab { crab, .. } => {
                format!("free-endpoint-crab({})", crab.freqs.len())
            }
        }
    }

    /// True when the protocol is piecewise-constant (exact propagation).
    pub fn is_piecewise(&self) -> bool {
        matches!(
            self.shape,
            Shape::Constant { .. }
                | Shape::BangBang { .. }
                | Shape::DoubleBang { .. }
                | Shape::SaturatedDoubleBang { .. }
        )
    }
}

/// CRAB protocol with fixed endpoints, zero coefficients and frequencies
/// drawn deterministically from the seed; `w0 = 1/tau`.
pub fn make_crab<S: Real>(
    g0: S,
    g1: S,
    tau: S,
    nc: usize,
    seed: u64,
    g_max: S,
) -> Result<Protocol<S>> {
    let crab = make_crab_shape(g0, g1, tau, nc, seed)?;
    Ok(Protocol {
        shape: Shape::Crab(crab),
        tau,
        g_max,
    })
}

/// Free-endpoint CRAB: the ramp endpoints join the optimization vector,
/// initialized at `(g0, g1)`.
pub fn make_free_endpoint_crab<S: Real>(
    g0: S,
    g1: S,
    tau: S,
    nc: usize,
    seed: u64,
    g_max: S,
) -> Result<Protocol<S>> {
    let crab = make_crab_shape(g0, g1, tau, nc, seed)?;
    Ok(Protocol {
        shape: Shape::FreeEndpointCrab {
            crab,
            g_start: g0,
            g_end: g1,
        },
        tau,
        g_max,
    })
}

fn make_crab_shape<S: Real>(g0: S, g1: S, tau: S, nc: usize, seed: u64) -> Result<CrabShape<S>> {
    if nc < 1 {
        return Err(Error::invalid("Nc", "CRAB needs at least one frequency"));
    }
    if tau <= S::zero() {
        return Err(Error::invalid("tau", "CRAB needs a positive duration"));
    }
    let omega0 = S::one() / tau;
    // c = 4/tau^2 normalizes the envelope so |b(t)| peaks at 1 at t = tau/2
    let envelope_c = S::of(4.0) / (tau * tau);
    Ok(CrabShape {
        g0,
        g1,
        freqs: CrabFrequencies::draw(omega0, nc, seed),
        x: vec![S::zero(); nc],
        y: vec![S::zero(); nc],
        envelope_c,
    })
}

fn clamp<S: Real>(g: S, g_max: S) -> S {
    g.max(-g_max).min(g_max)
}

/// `g(t)`, clamped to `[-g_max, g_max]`.
pub fn evaluate<S: Real>(p: &Protocol<S>, t: S) -> Result<S> {
    if t < S::zero() || t > p.tau {
        return Err(Error::invalid(
            "t",
            format!("time {t} outside protocol window [0, {}]", p.tau),
        ));
    }
    let raw = match &p.shape {
        Shape::Constant { g } => *g,
        Shape::LinearRamp { g0, g1 } => {
            if p.tau == S::zero() {
                *g1
            } else {
                *g0 + (*g1 - *g0) * t / p.tau
            }
        }
        Shape::DoubleBang { g_a, g_b, t_b } => {
            if t <= *t_b {
                *g_a
            } else {
                *g_b
            }
        }
        Shape::SaturatedDoubleBang { t1 } => {
            if t <= *t1 {
                p.g_max
            } else {
                -p.g_max
            }
        }
        Shape::BangBang {
            values,
            switch_times,
        } => {
            let mut idx = 0;
            for (k, &ts) in switch_times.iter().enumerate() {
                if t > ts {
                    idx = k + 1;
                }
            }
            values[idx]
        }
        Shape::Crab(c) => c.modulated(c.g0, c.g1, t, p.tau),
        Shape::FreeEndpointCrab {
            crab,
            g_start,
            g_end,
        } => crab.modulated(*g_start, *g_end, t, p.tau),
    };
    Ok(clamp(raw, p.g_max))
}

/// Ordered `(value, duration)` segments of a piecewise-constant protocol,
/// with values clamped, durations summing to `tau`, and zero-duration
/// segments dropped.
pub fn bang_segments<S: Real>(p: &Protocol<S>) -> Result<Vec<(S, S)>> {
    let raw: Vec<(S, S)> = match &p.shape {
        Shape::Constant { g } => vec![(*g, p.tau)],
        Shape::DoubleBang { g_a, g_b, t_b } => {
            let t_b = t_b.max(S::zero()).min(p.tau);
            vec![(*g_a, t_b), (*g_b, p.tau - t_b)]
        }
        Shape::SaturatedDoubleBang { t1 } => {
            let t1 = t1.max(S::zero()).min(p.tau);
            vec![(p.g_max, t1), (-p.g_max, p.tau - t1)]
        }
        Shape::BangBang {
            values,
            switch_times,
        } => {
            let mut segs = Vec::with_capacity(values.len());
            let mut prev = S::zero();
            for (k, &v) in values.iter().enumerate() {
                let end = if k < switch_times.len() {
                    switch_times[k].max(S::zero()).min(p.tau)
                } else {
                    p.tau
                };
                segs.push((v, (end - prev).max(S::zero())));
                prev = prev.max(end);
            }
            segs
        }
        Shape::LinearRamp { .. } | Shape::Crab(_) | Shape::FreeEndpointCrab { .. } => {
            return Err(Error::invalid(
                "protocol",
                format!("{} protocols use sampled evolution", p.family()),
            ));
        }
    };
    Ok(raw
        .into_iter()
        .map(|(g, d)| (clamp(g, p.g_max), d))
        .filter(|&(_, d)| d > S::zero())
        .collect())
}

/// Flattened optimization parameters with per-coordinate box bounds.
pub fn parameter_vector<S: Real>(p: &Protocol<S>) -> (Vec<S>, Vec<(S, S)>) {
    let g_box = (-p.g_max, p.g_max);
    let t_box = (S::zero(), p.tau);
    let c_box = (-S::of(CRAB_COEFF_MAX), S::of(CRAB_COEFF_MAX));
    match &p.shape {
        Shape::Constant { g } => (vec![*g], vec![g_box]),
        Shape::LinearRamp { .. } => (Vec::new(), Vec::new()),
        Shape::DoubleBang { g_a, g_b, t_b } => {
            (vec![*g_a, *g_b, *t_b], vec![g_box, g_box, t_box])
        }
        Shape::SaturatedDoubleBang { t1 } => (vec![*t1], vec![t_box]),
        Shape::BangBang {
            values,
            switch_times,
        } => {
            let mut x: Vec<S> = values.clone();
            x.extend_from_slice(switch_times);
            let mut bounds = vec![g_box; values.len()];
            bounds.extend(std::iter::repeat(t_box).take(switch_times.len()));
            (x, bounds)
        }
        Shape::Crab(c) => {
            let mut x = c.x.clone();
            x.extend_from_slice(&c.y);
            (x, vec![c_box; 2 * c.freqs.len()])
        }
        Shape::FreeEndpointCrab {
            crab,
            g_start,
            g_end,
        } => {
            let mut x = crab.x.clone();
            x.extend_from_slice(&crab.y);
            x.push(*g_start);
            x.push(*g_end);
            let mut bounds = vec![c_box; 2 * crab.freqs.len()];
            bounds.push(g_box);
            bounds.push(g_box);
            (x, bounds)
        }
    }
}

/// Rebuilds a protocol of the same family from a parameter vector. Unordered
/// switch times are sorted so optimizer iterates always form a valid
/// protocol.
pub fn from_parameter_vector<S: Real>(template: &Protocol<S>, x: &[S]) -> Result<Protocol<S>> {
    let mut p = template.clone();
    match &mut p.shape {
        Shape::Constant { g } => {
            expect_len(x, 1)?;
            *g = x[0];
        }
        Shape::LinearRamp { .. } => {
            expect_len(x, 0)?;
        }
        Shape::DoubleBang { g_a, g_b, t_b } => {
            expect_len(x, 3)?;
            *g_a = x[0];
            *g_b = x[1];
            *t_b = x[2];
        }
        Shape::SaturatedDoubleBang { t1 } => {
            expect_len(x, 1)?;
            *t1 = x[0];
        }
        Shape::BangBang {
            values,
            switch_times,
        } => {
            expect_len(x, values.len() + switch_times.len())?;
            let nv = values.len();
            values.copy_from_slice(&x[..nv]);
            switch_times.copy_from_slice(&x[nv..]);
            switch_times.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN switch time"));
        }
        Shape::Crab(c) => {
            let nc = c.freqs.len();
            expect_len(x, 2 * nc)?;
            c.x.copy_from_slice(&x[..nc]);
            c.y.copy_from_slice(&x[nc..]);
        }
        Shape::FreeEndpointCrab {
            crab,
            g_start,
            g_end,
        } => {
            let nc = crab.freqs.len();
            expect_len(x, 2 * nc + 2)?;
            crab.x.copy_from_slice(&x[..nc]);
            crab.y.copy_from_slice(&x[nc..2 * nc]);
            *g_start = x[2 * nc];
            *g_end = x[2 * nc + 1];
        }
    }
    Ok(p)
}

fn expect_len<S: Real>(x: &[S], want: usize) -> Result<()> {
    if x.len() != want {
        return Err(Error::invalid(
            "x",
            format!("parameter vector has length {}, expected {want}", x.len()),
        ));
    }
    Ok(())
}

/// Convenience used by tests: evaluate on a uniform grid of `points` times.
pub fn evaluate_grid<S: Real>(p: &Protocol<S>, points: usize) -> Result<Vec<S>> {
    let denom = S::of((points - 1) as f64);
    (0..points)
        // rounding can push the last point one ulp past tau
        .map(|k| evaluate(p, (p.tau * S::of(k as f64) / denom).min(p.tau)))
        .collect()
}

/// Protocol family selector, as exposed by the CLI and experiment configs.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ProtocolFamily {
    Constant,
    Linear,
    DoubleBang,
    /// `l`-bang piecewise-constant protocol with `2l - 1` parameters.
    NBang(usize),
    Crab(usize),
    FreeEndpointCrab(usize),
    SaturatedDoubleBang,
}

impl ProtocolFamily {
    /// True for families whose restarts redraw random frequencies.
    pub fn uses_frequencies(&self) -> bool {
        matches!(self, Self::Crab(_) | Self::FreeEndpointCrab(_))
    }

    pub fn label(&self) -> String {
        match self {
            Self::Constant => "constant".into(),
            Self::Linear => "linear".into(),
            Self::DoubleBang => "double-bang".into(),
            Self::NBang(l) => format!("n-bang({l})"),
            Self::Crab(nc) => format!("crab({nc})"),
            Self::FreeEndpointCrab(nc) => format!("free-endpoint-crab({nc})"),
            Self::SaturatedDoubleBang => "saturated-db".into(),
        }
    }

    /// Template protocol at the given duration; optimizers overwrite the
    /// parameter vector. CRAB templates draw their frequencies from `seed`.
    pub fn template<S: Real>(
        &self,
        g0: S,
        g1: S,
        g_max: S,
        tau: S,
        seed: u64,
    ) -> Result<Protocol<S>> {
        match self {
            Self::Constant => Ok(Protocol::constant(g1, tau, g_max)),
            Self::Linear => Ok(Protocol::linear_ramp(g0, g1, tau, g_max)),
            Self::DoubleBang => Ok(Protocol::double_bang(g0, g1, tau * S::of(0.5), tau, g_max)),
            Self::NBang(l) => {
                if *l < 2 {
                    return Err(Error::invalid("family", "n-bang needs at least 2 bangs"));
                }
                let values = vec![S::zero(); *l];
                let times = (1..*l)
                    .map(|k| tau * S::of(k as f64) / S::of(*l as f64))
                    .collect();
                Protocol::bang_bang(values, times, tau, g_max)
            }
            Self::Crab(nc) => make_crab(g0, g1, tau, *nc, seed, g_max),
            Self::FreeEndpointCrab(nc) => make_free_endpoint_crab(g0, g1, tau, *nc, seed, g_max),
            Self::SaturatedDoubleBang => Ok(Protocol::saturated_double_bang(
                tau * S::of(0.5),
                tau,
                g_max,
            )),
        }
    }

    /// Names accepted by [`ProtocolFamily::parse`].
    pub fn valid_names() -> &'static str {
        "constant, linear, double-bang, n-bang(L), crab(NC), free-endpoint-crab(NC), saturated-db"
    }

    /// Parses a family label such as `double-bang` or `crab(4)`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let parse_arg = |inner: &str, name: &'static str| -> Result<usize> {
            inner.parse::<usize>().map_err(|_| {
                Error::invalid("family", format!("bad {name} argument in `{s}`"))
            })
        };
        if let Some(rest) = s.strip_prefix("n-bang(").and_then(|r| r.strip_suffix(')')) {
            return Ok(Self::NBang(parse_arg(rest, "n-bang")?));
        }
        if let Some(rest) = s.strip_prefix("crab(").and_then(|r| r.strip_suffix(')')) {
            return Ok(Self::Crab(parse_arg(rest, "crab")?));
        }
        if let Some(rest) = s
            .strip_prefix("free-endpoint-crab(")
            .and_then(|r| r.strip_suffix(')'))
        {
            return Ok(Self::FreeEndpointCrab(parse_arg(rest, "free-endpoint-crab")?));
        }
        match s {
            "constant" => Ok(Self::Constant),
            "linear" => Ok(Self::Linear),
            "double-bang" => Ok(Self::DoubleBang),
            "saturated-db" => Ok(Self::SaturatedDoubleBang),
            other => Err(Error::invalid(
                "family",
                format!(
                    "unknown protocol family `{other}`; valid families: {}",
                    Self::valid_names()
                ),
            )),
        }
    }
}

impl std::fmt::Display for ProtocolFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.label())
    }
}
