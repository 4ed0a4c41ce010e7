use pyo3::prelude::*;

#[pymodule]
fn causal_atlas(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
