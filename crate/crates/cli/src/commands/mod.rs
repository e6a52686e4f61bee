pub mod distance;
pub mod evaluate;
pub mod gen_world;
pub mod md_map;
pub mod scenario;
pub mod search;
pub mod total_damage;
pub mod train;
mod util;
