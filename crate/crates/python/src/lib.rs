//! Python bindings: `import monoforge`.

use monoforge::ast::parse_type_expr;
use monoforge::eval::{test_named, test_program, EvalError, TestConfig, TestReport};
use monoforge::{check_program, compile, mangle as mangle_type, read_forms as read, CoreProgram};
use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A compiled monomorphic program.
#[pyclass(name = "Program", frozen)]
struct PyProgram {
    inner: CoreProgram,
}

/// Outcome of testing one theorem instance.
#[pyclass(name = "TestReport", frozen, get_all)]
struct PyTestReport {
    theorem: String,
    verdict: String,
    assignments: u64,
    text: String,
    sexpr: String,
}

impl From<TestReport> for PyTestReport {
    fn from(r: TestReport) -> Self {
        PyTestReport {
            theorem: r.theorem.clone(),
            verdict: r.verdict().to_string(),
            assignments: r.assignments,
            text: r.render_text(),
            sexpr: r.to_sexpr().to_string(),
        }
    }
}

#[pymethods]
impl PyTestReport {
    #[getter]
    fn passed(&self) -> bool {
        self.verdict == "PASS"
    }

    fn __repr__(&self) -> String {
        self.text.clone()
    }
}

#[pymethods]
impl PyProgram {
    #[staticmethod]
    fn compile(text: &str) -> PyResult<Self> {
        compile(text).map(|inner| PyProgram { inner }).map_err(value_error)
    }

    fn core_text(&self) -> String {
        self.inner.render()
    }

    /// Names of emitted items, in definition order.
    fn names(&self) -> Vec<String> {
        self.inner.flatten().iter().map(|i| i.name().to_string()).collect()
    }

    fn theorem_instances(&self) -> Vec<String> {
        self.inner.theorem_instances().map(|t| t.name.clone()).collect()
    }

    /// `[(definition, [(obligation, satisfied)])]`.
    fn check(&self) -> Vec<(String, Vec<(String, bool)>)> {
        check_program(&self.inner)
            .into_iter()
            .map(|r| {
                let obs = r
                    .obligations
                    .iter()
                    .map(|o| (o.kind.name().to_string(), o.satisfied))
                    .collect();
                (r.name, obs)
            })
            .collect()
    }

    #[pyo3(signature = (depth = 3, lo = -2, hi = 2, fuel = 100_000, theorem = None))]
    fn test(
        &self,
        py: Python<'_>,
        depth: usize,
        lo: i64,
        hi: i64,
        fuel: u64,
        theorem: Option<&str>,
    ) -> PyResult<Vec<PyTestReport>> {
        let cfg = TestConfig {
            depth,
            int_range: (lo, hi),
            fuel,
        };
        let reports = py.detach(|| match theorem {
            Some(name) => test_named(&self.inner, &name.to_uppercase(), &cfg).map(|r| vec![r]),
            None => test_program(&self.inner, &cfg),
        });
        match reports {
            Ok(rs) => Ok(rs.into_iter().map(PyTestReport::from).collect()),
            Err(e @ EvalError::UnknownTheorem(_)) => Err(PyKeyError::new_err(e.to_string())),
            Err(e) => Err(value_error(e)),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.flatten().len()
    }
}

/// Read s-expressions and print them back in canonical form.
#[pyfunction]
fn read_forms(text: &str) -> PyResult<Vec<String>> {
    read(text)
        .map(|forms| forms.iter().map(|f| f.to_string()).collect())
        .map_err(value_error)
}

/// Mangled name of `head` applied to ground type arguments written as s-expressions.
#[pyfunction]
fn mangle(head: &str, args: Vec<String>) -> PyResult<String> {
    let mut tys = Vec::with_capacity(args.len());
    for a in &args {
        let forms = read(a).map_err(value_error)?;
        let [form] = forms.as_slice() else {
            return Err(PyValueError::new_err(format!("expected one type, got `{a}`")));
        };
        tys.push(parse_type_expr(form, &[]).map_err(value_error)?);
    }
    mangle_type(&head.to_uppercase(), &tys).map_err(value_error)
}

#[pymodule]
#[pyo3(name = "monoforge")]
fn monoforge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProgram>()?;
    m.add_class::<PyTestReport>()?;
    m.add_function(wrap_pyfunction!(read_forms, m)?)?;
    m.add_function(wrap_pyfunction!(mangle, m)?)?;
    Ok(())
}
