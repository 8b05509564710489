//! Built-in example maps.

use crate::map::MapSpec;

pub const PIECEWISE_JSON: &str = include_str!("../../../maps/piecewise.json");
pub const PIECEWISE_FULL_JSON: &str = include_str!("../../../maps/piecewise_full.json");

/// The piecewise map with equilibria `{0, 1, 1.1, 1.2, 41/14}` on `[0, 41/14]`.
pub fn piecewise() -> MapSpec {
    MapSpec::from_json_str(PIECEWISE_JSON).expect("built-in spec parses")
}

/// The same map on `[0, inf)`, which adds the equilibrium 3.
pub fn piecewise_full() -> MapSpec {
    MapSpec::from_json_str(PIECEWISE_FULL_JSON).expect("built-in spec parses")
}

pub fn ricker_iterate(r: f64, k: u32) -> MapSpec {
    let m = MapSpec::ricker(r).iterate(k).expect("k >= 1");
    let name = if k == 1 { "ricker".to_string() } else { format!("ricker{k}") };
    m.with_name(&name)
}

/// Second iterate of the Ricker map, `r = 2.7`.
pub fn ricker2() -> MapSpec {
    ricker_iterate(2.7, 2)
}

/// Third iterate of the Ricker map, `r = 3.5`.
pub fn ricker3() -> MapSpec {
    ricker_iterate(3.5, 3)
}

/// Fourth iterate of the Ricker map, `r = 2.6`.
pub fn ricker4() -> MapSpec {
    ricker_iterate(2.6, 4)
}

/// Look up a built-in map by name.
pub fn by_name(name: &str) -> Option<MapSpec> {
    match name {
        "piecewise" => Some(piecewise()),
        "piecewise-full" => Some(piecewise_full()),
        "ricker2" => Some(ricker2()),
        "ricker3" => Some(ricker3()),
        "ricker4" => Some(ricker4()),
        _ => None,
    }
}
