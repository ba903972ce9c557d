//! Inlet/outlet pressure signals and their per-step slab averages.

use std::path::Path;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::spline::gauss_on;

/// A scalar signal of time.
#[derive(Debug, Clone, PartialEq)]
pub enum Signal {
    Expr(Expr),
    /// Piecewise-linear samples `(t, value)` with increasing `t`; constant
    /// extrapolation outside the table.
    Table(Vec<(f64, f64)>),
}

impl Signal {
    pub fn constant(v: f64) -> Self {
        Signal::Expr(Expr::Num(v))
    }

    /// Parses `expr:<expression>`, `table:<path>` or a bare expression.
    /// Relative table paths are resolved against `base`.
    pub fn parse(spec: &str, base: Option<&Path>) -> Result<Self> {
        let spec = spec.trim();
        if let Some(rest) = spec.strip_prefix("table:") {
            let p = Path::new(rest.trim());
            let full = match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p.to_path_buf(),
            };
            let text = std::fs::read_to_string(&full)
                .map_err(|e| Error::Config(format!("cannot read pressure table {}: {e}", full.display())))?;
            return Self::table_from_text(&text);
        }
        let body = spec.strip_prefix("expr:").unwrap_or(spec);
        Ok(Signal::Expr(Expr::parse(body.trim())?))
    }

    /// Two whitespace- or comma-separated columns `t value`; `#` starts a
    /// comment.
    pub fn table_from_text(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
            if cols.len() != 2 {
                return Err(Error::Config(format!("pressure table line {}: expected `t value`", ln + 1)));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Config(format!("pressure table line {}: bad number `{s}`", ln + 1)))
            };
            rows.push((parse(cols[0])?, parse(cols[1])?));
        }
        if rows.is_empty() {
            return Err(Error::Config("pressure table is empty".into()));
        }
        if rows.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Config("pressure table times must increase".into()));
        }
        Ok(Signal::Table(rows))
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Signal::Expr(e) => e.eval(t),
            Signal::Table(rows) => {
                if t <= rows[0].0 {
                    return rows[0].1;
                }
                let last = rows[rows.len() - 1];
                if t >= last.0 {
                    return last.1;
                }
                let j = rows.partition_point(|r| r.0 <= t);
                let (a, b) = (rows[j - 1], rows[j]);
                a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0)
            }
        }
    }

    /// Slab average `(1/Δt) ∫_{t0}^{t1} P dt`: exact for tables, 6-point
    /// Gauss for expressions.
    pub fn slab_average(&self, t0: f64, t1: f64) -> f64 {
        let dt = t1 - t0;
        if dt <= 0.0 {
            return self.value(t0);
        }
        match self {
            Signal::Expr(_) => gauss_on(t0, t1, 6).iter().map(|(t, w)| w * self.value(*t)).sum::<f64>() / dt,
            Signal::Table(rows) => {
                // Split at the table knots; trapezoid is exact per piece.
                let mut knots = vec![t0];
                knots.extend(rows.iter().map(|r| r.0).filter(|&t| t > t0 && t < t1));
                knots.push(t1);
                knots
                    .windows(2)
                    .map(|w| 0.5 * (w[1] - w[0]) * (self.value(w[0]) + self.value(w[1])))
                    .sum::<f64>()
                    / dt
            }
        }
    }

    /// Whether the signal is finite on `[0, t_end]`, sampled per step.
    pub fn check_finite(&self, t_end: f64, steps: usize) -> Result<()> {
        for n in 0..=steps.max(1) {
            let t = t_end * n as f64 / steps.max(1) as f64;
            if !self.value(t).is_finite() {
                return Err(Error::Config(format!("pressure signal is not finite at t = {t}")));
            }
        }
        Ok(())
    }
}

/// Inlet and outlet pressures.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureData {
    pub p_in: Signal,
    pub p_out: Signal,
}

impl PressureData {
    pub fn zero() -> Self {
        Self {
            p_in: Signal::constant(0.0),
            p_out: Signal::constant(0.0),
        }
    }

    /// Slab-averaged `(P_in, P_out)` over `[t0, t1]`.
    pub fn step(&self, t0: f64, t1: f64) -> (f64, f64) {
        (self.p_in.slab_average(t0, t1), self.p_out.slab_average(t0, t1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expression_sample() {
        let s = Signal::parse("expr:sin(2*pi*t)", None).unwrap();
        assert!((s.value(0.25) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn table_interpolates_and_averages_exactly() {
        let s = Signal::table_from_text("# t p\n0 0\n1, 2\n2 2\n").unwrap();
        assert_eq!(s.value(0.5), 1.0);
        assert_eq!(s.value(5.0), 2.0);
        assert_eq!(s.value(-1.0), 0.0);
        // ∫_{0.5}^{1.5} = ∫_{0.5}^{1} (linear 1..2) + ∫_1^{1.5} 2 = 0.75 + 1.
        assert!((s.slab_average(0.5, 1.5) - 1.75).abs() < 1e-15);
        assert!(Signal::table_from_text("1 0\n0 1").is_err());
        assert!(Signal::table_from_text("").is_err());
    }

    #[test]
    fn slab_average_of_polynomial_is_exact() {
        let s = Signal::parse("3*t^2", None).unwrap();
        // (1/Δt)∫ 3t² = (t1³ − t0³)/Δt.
        let (t0, t1) = (0.2, 0.7);
        assert!((s.slab_average(t0, t1) - (t1.powi(3) - t0.powi(3)) / (t1 - t0)).abs() < 1e-14);
    }
}
