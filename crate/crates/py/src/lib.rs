//! Python bindings (in progress).
use pyo3::prelude::*;

#[pymodule]
fn triadbell_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
