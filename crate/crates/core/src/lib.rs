pub mod sigcore;
pub mod featurize;
pub mod distances;
pub mod eval;
pub mod synthgen;
pub mod charting;
pub mod datastore;
