//! Gridworld navigation: worlds, multi-stop episodes and local observations.

mod episode;
mod observe;
mod world;

pub use episode::{load_episodes, route_length, sample_episodes, save_episodes, EpisodeSpec, MAX_STEPS_FACTOR};
pub use observe::{
    observe, render_view, EmbeddingTable, StateObservation, ViewEncoder, DEFAULT_VIEW_DIM, PIXELS_PER_CELL,
    VIEW_CHANNELS, VIEW_RADIUS,
};
pub use world::{generate_world, step, Action, Cell, GridWorld, DEFAULT_CELL_METERS, MAX_WORLD_ATTEMPTS};
