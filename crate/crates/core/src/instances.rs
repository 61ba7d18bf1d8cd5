//! Bundled pit instances.

use crate::lattice::PitLattice;

pub const MINI4: &str = include_str!("../instances/mini4.pit");
pub const STEP9: &str = include_str!("../instances/step9.pit");
pub const STRINGER12: &str = include_str!("../instances/stringer12.pit");
pub const SMOOTH12: &str = include_str!("../instances/smooth12.pit");

pub const NAMES: [&str; 4] = ["mini4", "step9", "stringer12", "smooth12"];

pub fn text(name: &str) -> Option<&'static str> {
    match name {
        "mini4" => Some(MINI4),
        "step9" => Some(STEP9),
        "stringer12" => Some(STRINGER12),
        "smooth12" => Some(SMOOTH12),
        _ => None,
    }
}

pub fn by_name(name: &str) -> Option<PitLattice> {
    text(name).map(|t| PitLattice::parse(t).expect("bundled instance parses"))
}

pub fn mini4() -> PitLattice {
    by_name("mini4").unwrap()
}

pub fn step9() -> PitLattice {
    by_name("step9").unwrap()
}

pub fn stringer12() -> PitLattice {
    by_name("stringer12").unwrap()
}

pub fn smooth12() -> PitLattice {
    by_name("smooth12").unwrap()
}

pub fn all() -> Vec<(&'static str, PitLattice)> {
    NAMES.iter().map(|&n| (n, by_name(n).unwrap())).collect()
}
