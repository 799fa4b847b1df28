//! Step-size schedules, a-priori stopping indices and step admissibility.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::Registry;

/// A step-size rule `k ↦ μ_k` for `k ≥ 1`.
pub trait StepSchedule: Send + Sync {
    fn step(&self, mu0: f64, decay: f64, k: u64) -> Result<f64>;
}

struct PowerLaw;
struct Constant;

impl StepSchedule for PowerLaw {
    fn step(&self, mu0: f64, decay: f64, k: u64) -> Result<f64> {
        step_schedule(mu0, decay, k)
    }
}

impl StepSchedule for Constant {
    fn step(&self, mu0: f64, decay: f64, k: u64) -> Result<f64> {
        if decay != 0.0 {
            return Err(Error::invalid(format!("constant schedule given decay {decay}")));
        }
        step_schedule(mu0, 0.0, k)
    }
}

/// `power` (`μ_0 k^{-decay}`) and `constant`.
pub fn schedule_registry() -> Registry<dyn StepSchedule> {
    let mut reg: Registry<dyn StepSchedule> = Registry::new("step schedule");
    reg.register("power", Box::new(PowerLaw));
    reg.register("constant", Box::new(Constant));
    reg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default = "default_kind")]
    pub kind: String,
    pub mu0: f64,
    #[serde(default)]
    pub decay: f64,
}

fn default_kind() -> String {
    "power".into()
}

impl ScheduleSpec {
    pub fn power(mu0: f64, decay: f64) -> Self {
        Self {
            kind: default_kind(),
            mu0,
            decay,
        }
    }

    pub fn constant(mu0: f64) -> Self {
        Self::power(mu0, 0.0)
    }

    pub fn step(&self, k: u64) -> Result<f64> {
        schedule_registry().get(&self.kind)?.step(self.mu0, self.decay, k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu0 > 0.0 && self.mu0.is_finite()) {
            return Err(Error::invalid(format!("mu0 = {} must be positive", self.mu0)));
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return Err(Error::invalid(format!("step decay {} must be >= 0", self.decay)));
        }
        self.step(1).map(|_| ())
    }
}

/// `μ_k = μ_0 k^{-decay}`.
pub fn step_schedule(mu0: f64, decay: f64, k: u64) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("step index starts at 1"));
    }
    if decay == 0.0 {
        return Ok(mu0);
    }
    Ok(mu0 * (k as f64).powf(-decay))
}

/// Terms summed directly before switching to the Euler–Maclaurin tail.
const DIRECT_TERMS: u64 = 4096;
/// Largest index searched; beyond it the budget is treated as never spent.
const MAX_INDEX: u64 = 1 << 62;

/// `Σ_{ℓ=m+1}^{k} ℓ^{-s}` by Euler–Maclaurin with two correction terms.
fn power_tail(m: f64, k: f64, s: f64) -> f64 {
    let f = |x: f64| x.powf(-s);
    let df = |x: f64| -s * x.powf(-s - 1.0);
    let integral = if (s - 1.0).abs() < 1e-15 {
        (k / m).ln()
    } else {
        (k.powf(1.0 - s) - m.powf(1.0 - s)) / (1.0 - s)
    };
    integral + 0.5 * (f(k) - f(m)) + (df(k) - df(m)) / 12.0
}

/// Largest `k` with `δ^p Σ_{ℓ≤k} μ_ℓ ≤ Γ` for `μ_ℓ = μ_0 ℓ^{-decay}`.
///
/// Returns `None` when the partial sums never exhaust the budget (possible
/// for `decay > 1`) or only do so beyond `2^62` steps.
pub fn a_priori_stop_index(delta: f64, mu0: f64, decay: f64, gamma_budget: f64, p: f64) -> Result<Option<u64>> {
    for (name, v) in [("delta", delta), ("mu0", mu0), ("Gamma", gamma_budget), ("p", p)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(format!("{name} = {v} must be positive")));
        }
    }
    if !(decay >= 0.0 && decay.is_finite()) {
        return Err(Error::invalid(format!("step decay {decay} must be >= 0")));
    }
    let budget = gamma_budget / delta.powf(p);
    if decay == 0.0 {
        let estimate = (budget / mu0).floor();
        if estimate >= MAX_INDEX as f64 {
            return Ok(None);
        }
        let mut k = estimate as u64;
        while (k + 1) as f64 * mu0 <= budget {
            k += 1;
        }
        while k > 0 && k as f64 * mu0 > budget {
            k -= 1;
        }
        return Ok(Some(k));
    }
    let target = budget / mu0;
    let mut sum = 0.0;
    for l in 1..=DIRECT_TERMS {
        let next = sum + (l as f64).powf(-decay);
        if next > target {
            return Ok(Some(l - 1));
        }
        sum = next;
    }
    let m = DIRECT_TERMS as f64;
    let partial = |k: u64| sum + power_tail(m, k as f64, decay);
    let mut hi = DIRECT_TERMS * 2;
    while partial(hi) <= target {
        if hi >= MAX_INDEX {
            return Ok(None);
        }
        hi *= 2;
    }
    let mut lo = DIRECT_TERMS;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if partial(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

/// Outcome of [`check_step_admissibility`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Admissibility {
    pub admissible: bool,
    /// Minimum over the schedule of the descent margin.
    pub margin: f64,
}

/// Minimum over `mu_list` of `1 - γ - L^{p*} (G_{p*}/p*) μ^{p*-1}`, less
/// `(p-1)/p² ω^{p*}` when `omega` is given. With `omega` the steps are
/// admissible only if additionally `γ < 1/2`.
pub fn check_step_admissibility(
    mu_list: &[f64],
    gamma: f64,
    l_max: f64,
    g_pstar: f64,
    p_star: f64,
    omega: Option<f64>,
) -> Result<Admissibility> {
    if mu_list.is_empty() {
        return Err(Error::invalid("empty step list"));
    }
    if !(gamma >= 0.0 && l_max >= 0.0 && g_pstar > 0.0 && p_star > 1.0) {
        return Err(Error::invalid(format!(
            "admissibility constants out of range: gamma {gamma}, L {l_max}, G {g_pstar}, p* {p_star}"
        )));
    }
    let noise_term = match omega {
        Some(w) if w > 0.0 => {
            let p = p_star / (p_star - 1.0);
            (p - 1.0) / (p * p) * w.powf(p_star)
        }
        Some(w) => return Err(Error::invalid(format!("omega = {w} must be positive"))),
        None => 0.0,
    };
    let scale = l_max.powf(p_star) * g_pstar / p_star;
    let margin = mu_list
        .iter()
        .map(|mu| 1.0 - gamma - scale * mu.powf(p_star - 1.0) - noise_term)
        .fold(f64::INFINITY, f64::min);
    let admissible = margin > 0.0 && (omega.is_none() || gamma < 0.5);
    Ok(Admissibility { admissible, margin })
}

/// Step size with `μ^{p*-1} = p*(1 - γ - extra) / (2 L^{p*} G_{p*})`, which
/// leaves half of the available margin.
pub fn half_margin_step(gamma: f64, extra: f64, l_max: f64, g_pstar: f64, p_star: f64) -> f64 {
    let base = p_star * (1.0 - gamma - extra) / (2.0 * l_max.powf(p_star) * g_pstar);
    base.powf(1.0 / (p_star - 1.0))
}

/// `ω` with `(p-1)/p² ω^{p*} = target`.
pub fn omega_for_noise_term(target: f64, p: f64) -> f64 {
    let p_star = p / (p - 1.0);
    (target * p * p / (p - 1.0)).powf(1.0 / p_star)
}
