use std::fmt;
use std::str::FromStr;

use crate::geometry::GeomParams;

/// How appearance distance and geometric evidence become `d_C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CombineRule {
    /// `d_C = d_L`
    AppearanceOnly,
    /// `d_C = -n`
    GeometryOnly,
    /// `d_C = d_L (1 - omega)^a`
    Polynomial,
    /// `d_C = clamp(d_L, eps, 1)^n`
    Exponential,
}

impl CombineRule {
    pub const ALL: [CombineRule; 4] = [
        CombineRule::AppearanceOnly,
        CombineRule::GeometryOnly,
        CombineRule::Polynomial,
        CombineRule::Exponential,
    ];

    pub fn uses_geometry(self) -> bool {
        !matches!(self, CombineRule::AppearanceOnly)
    }

    pub fn short_name(self) -> &'static str {
        match self {
            CombineRule::AppearanceOnly => "app",
            CombineRule::GeometryOnly => "geom",
            CombineRule::Polynomial => "poly",
            CombineRule::Exponential => "exp",
        }
    }
}

impl fmt::Display for CombineRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for CombineRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "app" | "appearance_only" => Ok(CombineRule::AppearanceOnly),
            "geom" | "geometry_only" => Ok(CombineRule::GeometryOnly),
            "poly" | "polynomial" => Ok(CombineRule::Polynomial),
            "exp" | "exponential" => Ok(CombineRule::Exponential),
            other => Err(format!(
                "unknown rule {other:?} (expected app, geom, poly or exp)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombineParams {
    pub rule: CombineRule,
    /// Polynomial exponent, `a >= 0`.
    pub a: f64,
    /// Number of appearance-ranked entries to verify geometrically; 0 = all.
    pub shortlist_size: usize,
    /// Lower clamp on `d_L` inside the exponential rule.
    pub epsilon: f64,
    pub geometry: GeomParams,
}

impl Default for CombineParams {
    fn default() -> Self {
        CombineParams {
            rule: CombineRule::Exponential,
            a: 2.0,
            shortlist_size: 50,
            epsilon: 1e-9,
            geometry: GeomParams::default(),
        }
    }
}

impl CombineParams {
    pub fn with_rule(mut self, rule: CombineRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn inlier_threshold(&self) -> f64 {
        self.geometry.ransac.inlier_threshold
    }

    pub fn validate(&self) -> crate::Result<()> {
        if !(self.a >= 0.0 && self.a.is_finite()) {
            return Err(crate::ReidError::Invalid(format!(
                "a must be >= 0, got {}",
                self.a
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(crate::ReidError::Invalid(format!(
                "epsilon must be in (0, 1), got {}",
                self.epsilon
            )));
        }
        let t = self.inlier_threshold();
        if !(t > 0.0 && t.is_finite()) {
            return Err(crate::ReidError::Invalid(format!(
                "inlier threshold must be > 0, got {t}"
            )));
        }
        Ok(())
    }
}

/// `d_L * (1 - omega)^a`.
pub fn combine_polynomial(d_l: f64, omega: f64, a: f64) -> f64 {
    d_l * (1.0 - omega).powf(a)
}

/// `clamp(d_L, epsilon, 1)^n`; exactly 1 when `n = 0`.
pub fn combine_exponential(d_l: f64, n: usize, epsilon: f64) -> f64 {
    let base = d_l.clamp(epsilon, 1.0);
    match i32::try_from(n) {
        Ok(n) => base.powi(n),
        Err(_) => base.powf(n as f64),
    }
}
