//! Fixtures shared by the benches.

use singlab_core::elliptic::assemble;
use singlab_core::measure::discretize;
use singlab_core::{CoefficientField, DiscreteMeasure, Domain, LinearSystem, MeasureSpec};

/// Anisotropic diagonal coefficient, so assembly is not the identity fast path.
pub fn coefficient(dim: usize) -> CoefficientField {
    let diag: Vec<f64> = (0..dim).map(|k| 1.0 + k as f64).collect();
    CoefficientField::diagonal(&diag)
}

pub fn unit_system(dim: usize, resolution: usize) -> (Domain, LinearSystem) {
    let dom = Domain::unit(dim, resolution).unwrap();
    let system = assemble(&dom, &coefficient(dim)).unwrap();
    (dom, system)
}

/// Unit density plus a segment of mass 1 across the middle.
pub fn mixed_datum(dom: &Domain) -> DiscreteMeasure {
    let mut spec = MeasureSpec::constant(1.0);
    if dom.dim() >= 2 {
        let mut a = vec![0.5; dom.dim()];
        let mut b = a.clone();
        a[1] = 0.25;
        b[1] = 0.75;
        spec = spec.with_curve(vec![a, b], 2.0);
    }
    discretize(&spec, dom, dom.h() / 2.0).unwrap()
}
