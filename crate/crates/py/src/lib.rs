use pyo3::prelude::*;

#[pymodule]
fn latentmark_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
