//! Scalar expressions of the coordinates `x`, `y`, `z`.
//!
//! Syntax is that of `evalexpr`; functions live under `math::`, e.g.
//! `math::sin(pi * x)`. The constant `pi` is predefined. Integer literals are promoted when mixed with
//! floats, but `1/2` is integer division, so write `1.0/2.0`.

use std::fmt;

use evalexpr::{
    build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node,
    Value,
};

use crate::error::{Error, Result};

const VARS: [&str; 3] = ["x", "y", "z"];

#[derive(Clone)]
pub struct Expression {
    source: String,
    tree: Node<DefaultNumericTypes>,
}

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Expression").field(&self.source).finish()
    }
}

impl Expression {
    pub fn parse(source: &str) -> Result<Self> {
        let tree = build_operator_tree::<DefaultNumericTypes>(source).map_err(|e| {
            Error::Expression {
                expr: source.to_string(),
                message: e.to_string(),
            }
        })?;
        let expr = Expression {
            source: source.to_string(),
            tree,
        };
        // Probe once so that unknown identifiers surface at parse time.
        expr.eval(&[0.5, 0.5, 0.5])?;
        Ok(expr)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Evaluates at a point; missing trailing coordinates are zero.
    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        self.eval_in(&mut ctx, point)
    }

    /// Evaluates at many points, reusing one context.
    pub fn eval_many<'a, I>(&self, points: I) -> Result<Vec<f64>>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        points
            .into_iter()
            .map(|p| self.eval_in(&mut ctx, p))
            .collect()
    }

    fn eval_in(&self, ctx: &mut HashMapContext<DefaultNumericTypes>, point: &[f64]) -> Result<f64> {
        let wrap = |message: String| Error::Expression {
            expr: self.source.clone(),
            message,
        };
        ctx.set_value("pi".into(), Value::from_float(std::f64::consts::PI))
            .map_err(|e| wrap(e.to_string()))?;
        for (k, name) in VARS.iter().enumerate() {
            let v = point.get(k).copied().unwrap_or(0.0);
            ctx.set_value((*name).into(), Value::from_float(v))
                .map_err(|e| wrap(e.to_string()))?;
        }
        self.tree
            .eval_number_with_context(ctx)
            .map_err(|e| wrap(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_coordinates() {
        let e = Expression::parse("1 + 2*x*y").unwrap();
        assert_eq!(e.eval(&[0.5, 3.0]).unwrap(), 4.0);
        let e = Expression::parse("math::sin(pi * x)").unwrap();
        assert!((e.eval(&[0.5]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constants_and_errors() {
        assert_eq!(Expression::parse("5").unwrap().eval(&[]).unwrap(), 5.0);
        assert!(Expression::parse("1 +").is_err());
        assert!(Expression::parse("w * 2").is_err());
    }
}
