//! Dataset ingestion: site-table preparation, synthetic fixtures and file
//! formats.

pub mod formats;
pub mod records;
pub mod synthetic;

pub use formats::{load_dataset, load_site_table, save_dataset, save_site_table, DatasetFormat};
pub use records::{
    filter_kernel, merge_site_tables, prepare_sites, records_to_viewpoints, restrict_links, Link, MergedSites,
    PartialRecord, PartialTable, SiteRecord, ViewpointOptions, INLINKS, OUTLINKS, SUBDOMAINS, TOWNS,
};
pub use synthetic::{generate_synthetic, generate_synthetic_with_groups, SyntheticSpec, SyntheticViewpoint};
