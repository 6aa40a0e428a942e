use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::Array2;

use super::{ConstraintSpec, ModelSet};
use crate::error::{Error, Result};

/// Everything a set factory may need. Fields a family does not use are ignored.
#[derive(Debug, Clone, Default)]
pub struct SetParams {
    pub p: usize,
    pub s: Option<usize>,
    pub radius: Option<f64>,
    pub rank: Option<usize>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub basis: Option<Array2<f64>>,
}

pub type SetFactory = fn(&SetParams) -> Result<Arc<dyn ModelSet>>;

fn need<T: Copy>(v: Option<T>, family: &str, field: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("constraint `{family}` needs `{field}`")))
}

fn build_unconstrained(params: &SetParams) -> Result<Arc<dyn ModelSet>> {
    ConstraintSpec::unconstrained(params.p).build()
}

fn build_sparsity(params: &SetParams) -> Result<Arc<dyn ModelSet>> {
    ConstraintSpec::sparsity(params.p, need(params.s, "sparsity", "s")?).build()
}

fn build_l1(params: &SetParams) -> Result<Arc<dyn ModelSet>> {
    ConstraintSpec::l1_ball(params.p, need(params.radius, "l1", "radius")?).build()
}

fn build_subspace(params: &SetParams) -> Result<Arc<dyn ModelSet>> {
    let basis = params
        .basis
        .clone()
        .ok_or_else(|| Error::Config("constraint `subspace` needs a basis".into()))?;
    ConstraintSpec::subspace(basis).build()
}

fn build_low_rank(params: &SetParams) -> Result<Arc<dyn ModelSet>> {
    let r = need(params.rank, "lowrank", "rank")?;
    let (rows, cols) = match (params.rows, params.cols) {
        (Some(rows), Some(cols)) => (rows, cols),
        _ => {
            let side = (params.p as f64).sqrt().round() as usize;
            if side * side != params.p {
                return Err(Error::Config(format!(
                    "constraint `lowrank` needs rows/cols when p = {} is not a perfect square",
                    params.p
                )));
            }
            (side, side)
        }
    };
    if rows * cols != params.p {
        return Err(Error::Config(format!(
            "low-rank view {rows}x{cols} does not match p = {}",
            params.p
        )));
    }
    ConstraintSpec::low_rank(rows, cols, r).build()
}

/// Name → factory table for constraint-set strategies.
pub struct SetRegistry {
    factories: BTreeMap<&'static str, SetFactory>,
}

impl SetRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// Registry with the five built-in families.
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("unconstrained", build_unconstrained);
        reg.register("sparsity", build_sparsity);
        reg.register("l1", build_l1);
        reg.register("subspace", build_subspace);
        reg.register("lowrank", build_low_rank);
        reg
    }

    pub fn register(&mut self, name: &'static str, factory: SetFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn build(&self, name: &str, params: &SetParams) -> Result<Arc<dyn ModelSet>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown constraint `{name}` (known: {})",
                self.names().join(", ")
            ))
        })?;
        factory(params)
    }
}

impl Default for SetRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_resolve_by_name() {
        let reg = SetRegistry::with_builtins();
        assert_eq!(
            reg.names(),
            vec!["l1", "lowrank", "sparsity", "subspace", "unconstrained"]
        );
        let set = reg
            .build(
                "sparsity",
                &SetParams {
                    p: 10,
                    s: Some(3),
                    ..Default::default()
                },
            )
            .unwrap();
        assert_eq!(set.name(), "sparsity");
        assert_eq!(set.dim(), 10);
        let lr = reg
            .build(
                "lowrank",
                &SetParams {
                    p: 16,
                    rank: Some(2),
                    ..Default::default()
                },
            )
            .unwrap();
        assert_eq!(lr.width_squared(None).unwrap(), 8.0);
    }

    #[test]
    fn missing_parameters_are_config_errors() {
        let reg = SetRegistry::with_builtins();
        assert!(matches!(
            reg.build(
                "sparsity",
                &SetParams {
                    p: 10,
                    ..Default::default()
                }
            ),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            reg.build(
                "lowrank",
                &SetParams {
                    p: 10,
                    rank: Some(1),
                    ..Default::default()
                }
            ),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            reg.build("nope", &SetParams::default()),
            Err(Error::Config(_))
        ));
    }
}
