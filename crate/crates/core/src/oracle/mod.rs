//! Reference renderers: volumetric path tracing, deterministic single
//! scattering and incident-radiance probes.

pub mod path_tracer;
pub mod probe;
pub mod single_scatter;

pub use path_tracer::{render_reference, sample_collision, PathTracerConfig};
pub use probe::{incident_radiance_probe, ProbeGrid, ProbeGridConfig};
pub use single_scatter::{single_scatter_reference, SingleScatterConfig};
