//! Bundled chain and world descriptions.
//!
//! The same files ship under `assets/` so that scenario configs can refer to
//! them by path.

use crate::kinematics::KinematicChain;
use crate::simworld::WorldModel;

pub const PLANAR2_CHAIN: &str = include_str!("../assets/chains/planar2.chain");
pub const PLANAR_HOLONOMIC_CHAIN: &str = include_str!("../assets/chains/planar_holonomic.chain");
pub const ARM7_CHAIN: &str = include_str!("../assets/chains/arm7.chain");

/// Two-obstacle corridor for the planar reacher. Obstacle placement is an
/// approximation chosen to create a local minimum between start and goal.
pub const FIG3_WORLD: &str = include_str!("../assets/worlds/fig3_reacher.world");
pub const EMPTY_WORLD: &str = include_str!("../assets/worlds/empty.world");
pub const TABLE_WORLD: &str = include_str!("../assets/worlds/table.world");

/// Path to the bundled asset directory in the source tree.
pub fn asset_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("assets")
}

pub fn planar2() -> KinematicChain {
    KinematicChain::from_json(PLANAR2_CHAIN).expect("bundled planar2 chain is valid")
}

pub fn planar_holonomic() -> KinematicChain {
    KinematicChain::from_json(PLANAR_HOLONOMIC_CHAIN).expect("bundled holonomic chain is valid")
}

pub fn arm7() -> KinematicChain {
    KinematicChain::from_json(ARM7_CHAIN).expect("bundled arm7 chain is valid")
}

pub fn fig3_world() -> WorldModel {
    WorldModel::from_json(FIG3_WORLD).expect("bundled fig3 world is valid")
}

pub fn empty_world() -> WorldModel {
    WorldModel::from_json(EMPTY_WORLD).expect("bundled empty world is valid")
}

pub fn table_world() -> WorldModel {
    WorldModel::from_json(TABLE_WORLD).expect("bundled table world is valid")
}
