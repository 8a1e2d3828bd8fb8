//! Strip geometry, conductivities and finite-element forms.

pub mod assembly;
pub mod conductivity;
pub mod mesh;

pub use assembly::{
    assemble_endo_load, assemble_forms, check_compatibility, element_mass, element_stiffness, triplets,
    Compatibility, FormAssembly,
};
pub use conductivity::{ConductivityField, Tensor2};
pub use mesh::{build_strip_mesh, CoupledMesh, Quad, Region, StripGeometry};
