pub mod dimest_run;
pub mod dist_to_border;
pub mod grid;
pub mod pad_compare;
pub mod probe;
pub mod reach;
pub mod report;
pub mod ring_region;
pub mod stage_sweep;
