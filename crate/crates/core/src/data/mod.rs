//! Simulations, datasets, standardization, fold management and the
//! synthetic cylinder-flow generator.

mod scaler;
mod simulation;
mod split;
mod synthetic;

pub use scaler::{Channels, Direction, ScalerPair, STD_FLOOR};
pub use simulation::{
    input, load_dataset, load_simulation, target, write_dataset, write_simulation, Dataset,
    Manifest, Simulation, Split, CSV_COLUMNS, MANIFEST_FILE, N_INPUTS, N_TARGETS,
};
pub use split::{kfold_indices, kfold_split, subsample, subsample_count, Fold};
pub use synthetic::{
    generate_cylinder_flow, CylinderFlow, CylinderFlowConfig, FIELD_EXTENT, NUT_COEFF,
};
