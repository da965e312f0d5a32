//! Log-linear supply and demand with an observed supply shifter.
//!
//! ```text
//! demand:  ln Q = α_d + β_d ln P + ε_d
//! supply:  ln Q = α_s + β_s ln P + γ_s Z + ε_s
//! ```
//!
//! Markets clear, so the observed log price and quantity solve both
//! equations at once. Shocks are jointly normal with standard deviations
//! `σ_d`, `σ_s` and correlation `ρ`, independent of `Z`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::config::{parse_key_values, KeyValues};
use crate::data::{Column, Dataset};
use crate::error::{IvError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarketParams {
    pub alpha_d: f64,
    pub beta_d: f64,
    pub alpha_s: f64,
    pub beta_s: f64,
    pub gamma_s: f64,
    pub sigma_d: f64,
    pub sigma_s: f64,
    pub rho: f64,
}

impl Default for MarketParams {
    /// Roughly the scale of a daily wholesale fish market: unit-elastic
    /// demand, supply shifted down by bad weather.
    fn default() -> Self {
        Self {
            alpha_d: 8.3,
            beta_d: -1.0,
            alpha_s: 8.9,
            beta_s: 1.0,
            gamma_s: -0.7,
            sigma_d: 0.5,
            sigma_s: 0.5,
            rho: 0.0,
        }
    }
}

impl MarketParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.alpha_d, self.beta_d, self.alpha_s, self.beta_s, self.gamma_s, self.sigma_d,
            self.sigma_s, self.rho,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(IvError::InvalidArgument("market parameters must be finite".into()));
        }
        if !(self.beta_s - self.beta_d > 0.0) {
            return Err(IvError::InvalidArgument(format!(
                "need beta_s - beta_d > 0 for a unique equilibrium (beta_s = {}, beta_d = {})",
                self.beta_s, self.beta_d
            )));
        }
        if self.sigma_d < 0.0 || self.sigma_s < 0.0 {
            return Err(IvError::InvalidArgument("shock standard deviations must be >= 0".into()));
        }
        if self.rho.abs() > 1.0 {
            return Err(IvError::InvalidArgument(format!("|rho| must be <= 1, got {}", self.rho)));
        }
        Ok(())
    }

    fn slope_gap(&self) -> f64 {
        self.beta_s - self.beta_d
    }

    pub fn demand(&self, log_price: f64, eps_d: f64) -> f64 {
        self.alpha_d + self.beta_d * log_price + eps_d
    }

    pub fn supply(&self, log_price: f64, eps_s: f64, z: f64) -> f64 {
        self.alpha_s + self.beta_s * log_price + self.gamma_s * z + eps_s
    }

    /// Instrument coefficients of the two reduced forms:
    /// `(−γ_s β_d / (β_s − β_d), −γ_s / (β_s − β_d))` for quantity and price.
    pub fn reduced_form_slopes(&self) -> (f64, f64) {
        let gap = self.slope_gap();
        (-self.gamma_s * self.beta_d / gap, -self.gamma_s / gap)
    }

    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut kv = parse_key_values(text)?;
        let d = Self::default();
        let p = Self {
            alpha_d: kv.take_or("alpha_d", d.alpha_d)?,
            beta_d: kv.take_or("beta_d", d.beta_d)?,
            alpha_s: kv.take_or("alpha_s", d.alpha_s)?,
            beta_s: kv.take_or("beta_s", d.beta_s)?,
            gamma_s: kv.take_or("gamma_s", d.gamma_s)?,
            sigma_d: kv.take_or("sigma_d", d.sigma_d)?,
            sigma_s: kv.take_or("sigma_s", d.sigma_s)?,
            rho: kv.take_or("rho", d.rho)?,
        };
        kv.finish()?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_key_values(&self) -> String {
        let mut kv = KeyValues::default();
        kv.insert("alpha_d", self.alpha_d);
        kv.insert("beta_d", self.beta_d);
        kv.insert("alpha_s", self.alpha_s);
        kv.insert("beta_s", self.beta_s);
        kv.insert("gamma_s", self.gamma_s);
        kv.insert("sigma_d", self.sigma_d);
        kv.insert("sigma_s", self.sigma_s);
        kv.insert("rho", self.rho);
        kv.render()
    }
}

/// One market period at equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarketDraw {
    pub log_price: f64,
    pub log_quantity: f64,
    pub instrument: f64,
    /// `(ε_d, ε_s)`
    pub shocks: (f64, f64),
}

/// Market-clearing log price and quantity.
pub fn equilibrium(p: &MarketParams, eps_d: f64, eps_s: f64, z: f64) -> MarketDraw {
    let gap = p.slope_gap();
    let log_price = (p.alpha_d - p.alpha_s) / gap + (eps_d - eps_s) / gap - p.gamma_s * z / gap;
    let log_quantity = (p.beta_s * p.alpha_d - p.beta_d * p.alpha_s) / gap
        + (p.beta_s * eps_d - p.beta_d * eps_s) / gap
        - p.gamma_s * p.beta_d * z / gap;
    MarketDraw {
        log_price,
        log_quantity,
        instrument: z,
        shocks: (eps_d, eps_s),
    }
}

/// Distribution of the supply shifter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum InstrumentLaw {
    /// `Z ∈ {0, 1}` with `P(Z = 1) = q`; column `stormy`.
    Bernoulli { q: f64 },
    /// `Z ~ N(0, 1)`; column `z`.
    StandardNormal,
    /// Weather severity `Z ∈ {0 (fair), 1 (mixed), 2 (stormy)}`, exported as
    /// two indicator columns `mixed`, `stormy` with fair as baseline.
    Weather { mixed: f64, stormy: f64 },
}

impl InstrumentLaw {
    /// Stormy share of the 111 fish-market days (32 stormy).
    pub fn fish_binary() -> Self {
        InstrumentLaw::Bernoulli { q: 32.0 / 111.0 }
    }

    /// Stormy / mixed / fair split 32 / 34 / 45.
    pub fn fish_weather() -> Self {
        InstrumentLaw::Weather {
            mixed: 34.0 / 111.0,
            stormy: 32.0 / 111.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |v: f64| (0.0..=1.0).contains(&v);
        match *self {
            InstrumentLaw::Bernoulli { q } if !prob(q) => Err(IvError::InvalidArgument(format!(
                "Bernoulli probability must lie in [0, 1], got {q}"
            ))),
            InstrumentLaw::Weather { mixed, stormy }
                if !prob(mixed) || !prob(stormy) || mixed + stormy > 1.0 =>
            {
                Err(IvError::InvalidArgument(format!(
                    "weather shares must be probabilities summing to at most 1 (mixed = {mixed}, stormy = {stormy})"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Parse `bernoulli:Q`, `normal`, or `weather:MIXED:STORMY`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| IvError::InvalidArgument(format!("bad instrument law `{s}`")))
        };
        let law = match parts.as_slice() {
            ["normal"] => InstrumentLaw::StandardNormal,
            ["bernoulli", q] => InstrumentLaw::Bernoulli { q: num(q)? },
            ["weather", m, st] => InstrumentLaw::Weather {
                mixed: num(m)?,
                stormy: num(st)?,
            },
            ["fish"] => Self::fish_binary(),
            ["fish-weather"] => Self::fish_weather(),
            _ => {
                return Err(IvError::InvalidArgument(format!(
                    "unknown instrument law `{s}` (expected bernoulli:Q, normal, weather:MIXED:STORMY, fish, fish-weather)"
                )))
            }
        };
        law.validate()?;
        Ok(law)
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            InstrumentLaw::Bernoulli { q } => f64::from(rng.random::<f64>() < q),
            InstrumentLaw::StandardNormal => StandardNormal.sample(rng),
            InstrumentLaw::Weather { mixed, stormy } => {
                let u: f64 = rng.random();
                if u < stormy {
                    2.0
                } else if u < stormy + mixed {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// `(ε_d, ε_s)` with the configured scales and correlation.
fn draw_shocks<R: Rng>(p: &MarketParams, rng: &mut R) -> (f64, f64) {
    let u1: f64 = StandardNormal.sample(rng);
    let u2: f64 = StandardNormal.sample(rng);
    let tail = (1.0 - p.rho * p.rho).max(0.0).sqrt();
    (p.sigma_d * u1, p.sigma_s * (p.rho * u1 + tail * u2))
}

/// `t_count` independent equilibrium draws.
pub fn simulate_draws(
    p: &MarketParams,
    t_count: usize,
    law: &InstrumentLaw,
    seed: u64,
) -> Result<Vec<MarketDraw>> {
    p.validate()?;
    law.validate()?;
    if t_count < 1 {
        return Err(IvError::InvalidArgument("t_count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..t_count)
        .map(|_| {
            let z = law.sample(&mut rng);
            let (eps_d, eps_s) = draw_shocks(p, &mut rng);
            equilibrium(p, eps_d, eps_s, z)
        })
        .collect())
}

/// Simulated markets as a dataset: outcome `log_quantity`, treatment
/// `log_price`, instrument columns per [`InstrumentLaw`].
pub fn simulate_markets(
    p: &MarketParams,
    t_count: usize,
    law: &InstrumentLaw,
    seed: u64,
) -> Result<Dataset> {
    let draws = simulate_draws(p, t_count, law, seed)?;
    let q: Vec<f64> = draws.iter().map(|d| d.log_quantity).collect();
    let price: Vec<f64> = draws.iter().map(|d| d.log_price).collect();
    let level = |target: f64| -> Vec<f64> {
        draws.iter().map(|d| f64::from(d.instrument == target)).collect()
    };
    let instruments: Vec<Column> = match law {
        InstrumentLaw::Bernoulli { .. } => vec![("stormy".into(), level(1.0))],
        InstrumentLaw::StandardNormal => {
            vec![("z".into(), draws.iter().map(|d| d.instrument).collect())]
        }
        InstrumentLaw::Weather { .. } => {
            vec![("mixed".into(), level(1.0)), ("stormy".into(), level(2.0))]
        }
    };
    Dataset::new(("log_quantity".into(), q), ("log_price".into(), price), instruments, vec![])
}

/// Population slope of log quantity on log price when `γ_s = 0`:
/// a shock-variance-weighted mix of the supply and demand slopes.
pub fn working_slope(p: &MarketParams) -> Result<f64> {
    let (sd, ss, rho) = (p.sigma_d, p.sigma_s, p.rho);
    let denom = ss * ss + sd * sd - 2.0 * rho * sd * ss;
    if !(denom > 0.0) {
        return Err(IvError::Undefined("equilibrium price has zero variance".into()));
    }
    Ok((p.beta_s * sd * sd + p.beta_d * ss * ss - rho * sd * ss * (p.beta_d + p.beta_s)) / denom)
}

/// Equilibrium under an ad valorem tax `r` paid by buyers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaxOutcome {
    /// Log price received by sellers.
    pub log_price_net: f64,
    /// Log price paid by buyers, `log_price_net + ln(1 + r)`.
    pub log_price_gross: f64,
    pub log_quantity: f64,
    /// `ln Q(r) − ln Q(0) = β_s β_d ln(1 + r) / (β_s − β_d)`, the same in
    /// every market.
    pub effect_on_log_quantity: f64,
}

pub fn tax_counterfactual(p: &MarketParams, r: f64, eps_d: f64, eps_s: f64) -> Result<TaxOutcome> {
    p.validate()?;
    if !(r >= 0.0) || !r.is_finite() {
        return Err(IvError::InvalidArgument(format!("tax rate must be >= 0, got {r}")));
    }
    let gap = p.slope_gap();
    let wedge = r.ln_1p();
    let log_price_net =
        (p.alpha_d - p.alpha_s) / gap + p.beta_d * wedge / gap + (eps_d - eps_s) / gap;
    let log_quantity = p.supply(log_price_net, eps_s, 0.0);
    Ok(TaxOutcome {
        log_price_net,
        log_price_gross: log_price_net + wedge,
        log_quantity,
        effect_on_log_quantity: p.beta_s * p.beta_d * wedge / gap,
    })
}
