//! File formats, orchestration and inference.

pub mod config;
pub mod crop;
pub mod cubefile;
pub mod grid;
pub mod infer;
pub mod report;

pub use config::{ExperimentConfig, GridEntry, GridSpec, SpecTemplate};
pub use crop::{crop_split, split_regions, CropPolicy, CropRegion};
pub use cubefile::{
    import_raw, import_raw_bytes, load_cube, read_cube, save_cube, write_cube, ByteOrder,
    Interleave, RawDtype, RawSidecar,
};
pub use grid::{
    ablation_variants, grid_manifest, load_ground_truth, run_ablation, run_entry, run_grid,
    AblationVariant, RunOutput,
};
pub use infer::{infer, infer_tiled, infer_window};
pub use report::{Manifest, MeanRow, ResultRow, ResultTable, RowKey};
