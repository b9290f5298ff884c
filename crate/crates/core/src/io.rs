//! Text formatting and the JSON file formats for structures and solutions.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use nalgebra::{Matrix6, Vector3, Vector6};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::assembly::{approx_residual, ElementSolution, Solution, Structure};
use crate::beam::NodeState;
use crate::constitutive::{LawPreset, ManifoldLaw};
use crate::error::{check_dim, Error, Result};

/// Formats a float with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, text)?;
    Ok(())
}


/// Pretty JSON whose floats carry 17 significant digits.
struct FullPrecision<'a>(PrettyFormatter<'a>);

impl Formatter for FullPrecision<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(fmt_f64(v).as_bytes())
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes to indented JSON; non-finite floats become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn arr3(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn arr6(v: &Vector6<f64>) -> [f64; 6] {
    let mut a = [0.0; 6];
    a.copy_from_slice(v.as_slice());
    a
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub pos: [f64; 3],
    /// `[d1, d2, d3]`, orthonormal.
    pub directors: [[f64; 3]; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadSpec {
    /// 1-based node number.
    pub node: usize,
    pub force: [f64; 3],
}

/// `"identity"` or an explicit symmetric positive definite 6×6 matrix (rows).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    Named(String),
    Matrix([[f64; 6]; 6]),
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::Named("identity".into())
    }
}

impl WeightSpec {
    pub fn matrix(&self) -> Result<Matrix6<f64>> {
        match self {
            WeightSpec::Named(name) if name == "identity" => Ok(Matrix6::identity()),
            WeightSpec::Named(name) => Err(Error::InvalidInput(format!("unknown weight '{name}'"))),
            WeightSpec::Matrix(rows) => Ok(Matrix6::from_fn(|i, j| rows[i][j])),
        }
    }
}

/// Structure input file. Node and element numbers are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureFile {
    pub nodes: Vec<NodeSpec>,
    pub elements: Vec<[usize; 2]>,
    /// Reference lengths; the node distance when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lengths: Option<Vec<f64>>,
    #[serde(default)]
    pub fixed: Vec<usize>,
    #[serde(default)]
    pub loads: Vec<LoadSpec>,
    /// Defaults to the linear verification law.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law: Option<ManifoldLaw>,
    #[serde(default)]
    pub weight: WeightSpec,
}

fn one_based(i: usize, count: usize, what: &str) -> Result<usize> {
    if i == 0 || i > count {
        return Err(Error::InvalidInput(format!("{what} {i} out of range 1..={count}")));
    }
    Ok(i - 1)
}

impl StructureFile {
    pub fn from_structure(s: &Structure) -> Self {
        let weight = if s.weight == Matrix6::identity() {
            WeightSpec::default()
        } else {
            WeightSpec::Matrix(std::array::from_fn(|i| std::array::from_fn(|j| s.weight[(i, j)])))
        };
        Self {
            nodes: s
                .nodes
                .iter()
                .map(|n| NodeSpec {
                    pos: arr3(&n.phi0),
                    directors: [arr3(&n.d1), arr3(&n.d2), arr3(&n.d3)],
                })
                .collect(),
            elements: s.elements.iter().map(|e| [e.nodes[0] + 1, e.nodes[1] + 1]).collect(),
            lengths: Some(s.elements.iter().map(|e| e.length_ref).collect()),
            fixed: (1..=s.n_nodes()).filter(|&n| s.fixed[n - 1]).collect(),
            loads: s
                .loads
                .iter()
                .enumerate()
                .filter(|(_, f)| **f != Vector3::zeros())
                .map(|(n, f)| LoadSpec { node: n + 1, force: arr3(f) })
                .collect(),
            law: Some(s.law.clone()),
            weight,
        }
    }

    pub fn into_structure(self) -> Result<Structure> {
        let n = self.nodes.len();
        let nodes: Vec<NodeState> = self
            .nodes
            .iter()
            .map(|spec| {
                let [d1, d2, d3] = spec.directors.map(Vector3::from);
                NodeState::new(Vector3::from(spec.pos), d1, d2, d3)
            })
            .collect();
        if let Some(l) = &self.lengths {
            check_dim(self.elements.len(), l.len(), "element lengths")?;
        }
        let mut connectivity = Vec::with_capacity(self.elements.len());
        for (k, &[a, b]) in self.elements.iter().enumerate() {
            let (a, b) = (one_based(a, n, "node")?, one_based(b, n, "node")?);
            let length = match &self.lengths {
                Some(l) => l[k],
                None => (nodes[b].phi0 - nodes[a].phi0).norm(),
            };
            connectivity.push(([a, b], length));
        }
        let mut fixed = vec![false; n];
        for &i in &self.fixed {
            fixed[one_based(i, n, "fixed node")?] = true;
        }
        let law = self.law.unwrap_or_else(|| LawPreset::Verification.law());
        let mut s = Structure::new(nodes, connectivity, fixed, law, self.weight.matrix()?)?;
        for load in &self.loads {
            s.loads[one_based(load.node, n, "loaded node")?] += Vector3::from(load.force);
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub node: usize,
    pub fixed: bool,
    pub phi0: [f64; 3],
    pub d1: [f64; 3],
    pub d2: [f64; 3],
    pub d3: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<[f64; 6]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<[f64; 6]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementRecord {
    pub element: usize,
    pub nodes: [usize; 2],
    pub e_check: [f64; 6],
    pub s_check: [f64; 6],
    pub e: [f64; 6],
    pub s: [f64; 6],
    pub lambda: [f64; 6],
    pub xi: [f64; 6],
}

/// Solution output file; reloading it reproduces the global vector exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub converged: bool,
    pub iterations: usize,
    /// `‖r(x)‖` of the approximate NLP at the stored state.
    pub residual_norm: f64,
    pub nodes: Vec<NodeRecord>,
    pub elements: Vec<ElementRecord>,
}

impl SolutionFile {
    pub fn from_solution(structure: &Structure, sol: &Solution) -> Result<Self> {
        let residual_norm = approx_residual(structure, &sol.x)?.norm();
        let nodes = sol
            .nodes
            .iter()
            .zip(&sol.node_multipliers)
            .enumerate()
            .map(|(n, (q, m))| NodeRecord {
                node: n + 1,
                fixed: structure.fixed[n],
                phi0: arr3(&q.phi0),
                d1: arr3(&q.d1),
                d2: arr3(&q.d2),
                d3: arr3(&q.d3),
                mu: m.map(|(mu, _)| arr6(&mu)),
                nu: m.map(|(_, nu)| arr6(&nu)),
            })
            .collect();
        let elements = sol
            .elements
            .iter()
            .zip(&structure.elements)
            .enumerate()
            .map(|(k, (e, el))| ElementRecord {
                element: k + 1,
                nodes: [el.nodes[0] + 1, el.nodes[1] + 1],
                e_check: arr6(&e.strain_check),
                s_check: arr6(&e.stress_check),
                e: arr6(&e.strain),
                s: arr6(&e.stress),
                lambda: arr6(&e.lambda),
                xi: arr6(&e.xi),
            })
            .collect();
        Ok(Self {
            converged: sol.converged,
            iterations: sol.iterations,
            residual_norm,
            nodes,
            elements,
        })
    }

    /// Rebuilds the solution (without convergence trace) for `structure`.
    pub fn to_solution(&self, structure: &Structure) -> Result<Solution> {
        let v6 = Vector6::from_row_slice;
        let mut sol = Solution {
            nodes: self
                .nodes
                .iter()
                .map(|r| NodeState::new(r.phi0.into(), r.d1.into(), r.d2.into(), r.d3.into()))
                .collect(),
            elements: self
                .elements
                .iter()
                .map(|r| ElementSolution {
                    strain_check: v6(&r.e_check),
                    stress_check: v6(&r.s_check),
                    strain: v6(&r.e),
                    stress: v6(&r.s),
                    lambda: v6(&r.lambda),
                    xi: v6(&r.xi),
                })
                .collect(),
            node_multipliers: self
                .nodes
                .iter()
                .map(|r| r.mu.zip(r.nu).map(|(mu, nu)| (v6(&mu), v6(&nu))))
                .collect(),
            x: Default::default(),
            iterations: self.iterations,
            converged: self.converged,
            step_norms: Vec::new(),
            residual_norms: Vec::new(),
        };
        sol.x = sol.pack(structure)?;
        Ok(sol)
    }
}
