use anyhow::{ensure, Context};
use decision_boost::cones::{ConeBlock, ConeSpec};
use decision_boost::qcp::{self, QcpProblem, QcpSolution, SolverSettings};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub const PROBLEM_FORMAT: &str = "qcp-problem";
pub const SOLUTION_FORMAT: &str = "qcp-solution";
pub const FILE_VERSION: u32 = 1;

/// `solve` input. Matrices are dense and row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub format: String,
    pub version: u32,
    pub n_z: usize,
    pub n_y: usize,
    #[serde(rename = "P")]
    pub p: Vec<f64>,
    pub c: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub cone: Vec<ConeBlock>,
    #[serde(default)]
    pub settings: Option<SolverSettings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub format: String,
    pub version: u32,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub fixed_point_residual: f64,
}

impl ProblemFile {
    pub fn from_problem(problem: &QcpProblem) -> Self {
        let row_major = |m: &DMatrix<f64>| m.transpose().as_slice().to_vec();
        Self {
            format: PROBLEM_FORMAT.into(),
            version: FILE_VERSION,
            n_z: problem.n_z(),
            n_y: problem.n_y(),
            p: row_major(problem.p()),
            c: problem.c().to_vec(),
            a: row_major(problem.a()),
            b: problem.b().to_vec(),
            cone: problem.cone().blocks().to_vec(),
            settings: None,
        }
    }

    pub fn to_problem(&self) -> anyhow::Result<QcpProblem> {
        ensure!(
            self.format == PROBLEM_FORMAT,
            "format must be \"{PROBLEM_FORMAT}\", got \"{}\"",
            self.format
        );
        ensure!(self.version == FILE_VERSION, "unsupported problem file version {}", self.version);
        ensure!(self.p.len() == self.n_z * self.n_z, "P needs n_z*n_z = {} entries", self.n_z * self.n_z);
        ensure!(self.a.len() == self.n_y * self.n_z, "A needs n_y*n_z = {} entries", self.n_y * self.n_z);
        let p = DMatrix::from_row_slice(self.n_z, self.n_z, &self.p);
        let a = DMatrix::from_row_slice(self.n_y, self.n_z, &self.a);
        let cone = ConeSpec::new(self.cone.clone())?;
        Ok(QcpProblem::new(p, self.c.clone(), a, self.b.clone(), cone)?)
    }
}

pub fn solve_text(text: &str) -> anyhow::Result<SolutionFile> {
    let file: ProblemFile = serde_json::from_str(text).context("parsing problem file")?;
    let problem = file.to_problem()?;
    let settings = file.settings.unwrap_or_default();
    let sol: QcpSolution = qcp::solve(&problem, &settings, None)?;
    Ok(SolutionFile {
        format: SOLUTION_FORMAT.into(),
        version: FILE_VERSION,
        objective: problem.objective(&sol.z),
        z: sol.z,
        y: sol.y,
        s: sol.s,
        iterations: sol.iterations,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        fixed_point_residual: sol.fixed_point_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_onto_simplex() {
        // min ½‖z‖² - (1, 0)ᵀz over z ≥ 0, z₁ + z₂ = 1  →  z = (1, 0)
        let text = r#"{
            "format": "qcp-problem", "version": 1, "n_z": 2, "n_y": 3,
            "P": [1, 0, 0, 1], "c": [-1, 0],
            "A": [1, 1, -1, 0, 0, -1], "b": [1, 0, 0],
            "cone": [{"type": "zero", "dim": 1}, {"type": "non_neg", "dim": 2}]
        }"#;
        let sol = solve_text(text).unwrap();
        assert!((sol.z[0] - 1.0).abs() < 1e-7 && sol.z[1].abs() < 1e-7);
    }

    #[test]
    fn round_trip_through_problem() {
        let text = r#"{"format":"qcp-problem","version":1,"n_z":2,"n_y":1,"P":[2,1,1,2],"c":[1,-1],
            "A":[1,3],"b":[1],"cone":[{"type":"non_neg","dim":1}]}"#;
        let file: ProblemFile = serde_json::from_str(text).unwrap();
        let again = ProblemFile::from_problem(&file.to_problem().unwrap());
        assert_eq!(again, file);
    }

    #[test]
    fn rejects_bad_version() {
        let text = r#"{"format":"qcp-problem","version":2,"n_z":1,"n_y":0,"P":[1],"c":[0],"A":[],"b":[],"cone":[]}"#;
        assert!(solve_text(text).is_err());
    }
}
