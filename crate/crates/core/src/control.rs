//! The controlled map `G(v, x) = (1 - v) g(x) + v x` and deterministic PBC orbits.

use crate::error::{Error, Result};
use crate::map::MapSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::io::Write;

/// `G(v, x)`. Errors when `v` is outside `[0, 1]` or `x` outside the domain.
pub fn controlled_value(map: &MapSpec, v: f64, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Parameter(format!("control {v} outside [0, 1]")));
    }
    Ok(blend(v, map.eval(x)?, x))
}

#[inline]
pub fn blend(v: f64, gx: f64, x: f64) -> f64 {
    (1.0 - v) * gx + v * x
}

/// `G(v, x)`, NaN outside the domain. No range check on `v`.
#[inline]
pub fn g_of(map: &MapSpec, v: f64, x: f64) -> f64 {
    blend(v, map.eval_or_nan(x), x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Selector {
    Midpoint,
    /// Uniform draw in `[lo, hi]` from a ChaCha stream with this seed.
    Random(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ControlSchedule {
    Constant(f64),
    Interval { lo: f64, hi: f64, selector: Selector },
    /// Explicit values; the last one is held once the list runs out.
    Sequence(Vec<f64>),
}

impl ControlSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| (0.0..1.0).contains(&v);
        match self {
            ControlSchedule::Constant(a) if ok(*a) => Ok(()),
            ControlSchedule::Interval { lo, hi, .. } if ok(*lo) && ok(*hi) && lo <= hi => Ok(()),
            ControlSchedule::Sequence(v) if !v.is_empty() && v.iter().all(|a| ok(*a)) => Ok(()),
            other => Err(Error::Parameter(format!("invalid control schedule {other:?}"))),
        }
    }

    /// Produces `alpha_1, alpha_2, ...`.
    pub fn stream(&self) -> ControlStream<'_> {
        let rng = match self {
            ControlSchedule::Interval { selector: Selector::Random(seed), .. } => Some(ChaCha8Rng::seed_from_u64(*seed)),
            _ => None,
        };
        ControlStream { schedule: self, n: 0, rng }
    }
}

pub struct ControlStream<'a> {
    schedule: &'a ControlSchedule,
    n: usize,
    rng: Option<ChaCha8Rng>,
}

impl Iterator for ControlStream<'_> {
    type Item = f64;
    fn next(&mut self) -> Option<f64> {
        let v = match self.schedule {
            ControlSchedule::Constant(a) => *a,
            ControlSchedule::Interval { lo, hi, selector } => match selector {
                Selector::Midpoint => 0.5 * (lo + hi),
                Selector::Random(_) => {
                    let rng = self.rng.as_mut().expect("seeded");
                    lo + (hi - lo) * rng.gen::<f64>()
                }
            },
            ControlSchedule::Sequence(v) => v[self.n.min(v.len() - 1)],
        };
        self.n += 1;
        Some(v)
    }
}

/// A simulated trajectory. `controls[n]` is the value used to produce
/// `states[n]` from `states[n - 1]`; `controls[0]` is NaN.
#[derive(Debug, Clone, Serialize)]
pub struct OrbitRecord {
    pub initial: f64,
    pub states: Vec<f64>,
    pub controls: Vec<f64>,
    /// Step differences stayed below `1e-13` for 50 consecutive steps.
    pub converged: bool,
    /// The orbit left the domain or became non-finite.
    pub escaped: bool,
}

impl OrbitRecord {
    pub fn last(&self) -> f64 {
        *self.states.last().expect("nonempty")
    }

    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    /// CSV with columns `n, x, alpha`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["n", "x", "alpha"])?;
        for (n, (x, a)) in self.states.iter().zip(&self.controls).enumerate() {
            let a = if a.is_nan() { String::new() } else { format!("{a}") };
            wr.write_record([n.to_string(), format!("{x}"), a])?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub const CONVERGE_STEP: f64 = 1e-13;
pub const CONVERGE_WINDOW: usize = 50;

/// Iterate `x_{n+1} = G(alpha_{n+1}, x_n)` with controls from `alphas`.
pub fn run_orbit(map: &MapSpec, x0: f64, horizon: usize, mut alphas: impl FnMut() -> f64) -> OrbitRecord {
    let mut states = Vec::with_capacity(horizon.min(1 << 20) + 1);
    let mut controls = Vec::with_capacity(horizon.min(1 << 20) + 1);
    states.push(x0);
    controls.push(f64::NAN);
    let mut x = x0;
    let mut quiet = 0;
    let mut converged = false;
    let mut escaped = !map.domain.contains(x0);
    if !escaped {
        for _ in 0..horizon {
            let a = alphas();
            let gx = map.eval_or_nan(x);
            let next = blend(a, gx, x);
            if !next.is_finite() || !map.domain.contains(next) {
                escaped = true;
                break;
            }
            states.push(next);
            controls.push(a);
            if (next - x).abs() < CONVERGE_STEP {
                quiet += 1;
                if quiet >= CONVERGE_WINDOW {
                    converged = true;
                    x = next;
                    break;
                }
            } else {
                quiet = 0;
            }
            x = next;
        }
    }
    let _ = x;
    OrbitRecord { initial: x0, states, controls, converged, escaped }
}

/// Deterministic PBC orbit with a control schedule.
pub fn pbc_orbit(map: &MapSpec, schedule: &ControlSchedule, x0: f64, horizon: usize) -> Result<OrbitRecord> {
    if horizon < 1 {
        return Err(Error::Parameter("horizon must be at least 1".into()));
    }
    schedule.validate()?;
    map.eval(x0)?;
    let mut stream = schedule.stream();
    Ok(run_orbit(map, x0, horizon, || stream.next().expect("infinite")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    #[test]
    fn endpoints_of_the_blend() {
        let m = MapSpec::ricker(2.7);
        for i in 0..20 {
            let x = 0.15 * i as f64;
            assert_eq!(controlled_value(&m, 1.0, x).unwrap(), x);
            assert_eq!(controlled_value(&m, 0.0, x).unwrap(), m.eval(x).unwrap());
        }
        assert_eq!(controlled_value(&m, 0.5, 1.0).unwrap(), 1.0);
        assert!(controlled_value(&m, 1.5, 1.0).is_err());
    }

    #[test]
    fn equilibrium_orbit_is_constant() {
        let m = MapSpec::ricker(2.7);
        let o = pbc_orbit(&m, &ControlSchedule::Constant(0.3), 1.0, 500).unwrap();
        assert!(o.states.iter().all(|x| *x == 1.0));
        assert!(o.converged);
    }

    #[test]
    fn states_replay_bit_for_bit() {
        let m = corpus::ricker2();
        let s = ControlSchedule::Interval { lo: 0.3, hi: 0.6, selector: Selector::Random(7) };
        let o = pbc_orbit(&m, &s, 0.5, 300).unwrap();
        for n in 1..o.states.len() {
            assert_eq!(o.states[n], controlled_value(&m, o.controls[n], o.states[n - 1]).unwrap());
            assert!((0.3..=0.6).contains(&o.controls[n]));
        }
    }

    #[test]
    fn sequence_holds_last_value() {
        let s = ControlSchedule::Sequence(vec![0.1, 0.2]);
        let v: Vec<f64> = s.stream().take(4).collect();
        assert_eq!(v, vec![0.1, 0.2, 0.2, 0.2]);
    }

    #[test]
    fn csv_layout() {
        let m = MapSpec::ricker(2.7);
        let o = pbc_orbit(&m, &ControlSchedule::Constant(0.5), 0.5, 2).unwrap();
        let mut buf = Vec::new();
        o.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("n,x,alpha"));
        assert_eq!(lines.next(), Some("0,0.5,"));
        assert!(lines.next().unwrap().ends_with(",0.5"));
    }
}
